#include "optlab/harness.hpp"

int main(int argc, char** argv) { return optlab::harness::cli_main(argc, argv); }
