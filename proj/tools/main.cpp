#include "csafl/cli.hpp"

int main(int argc, char** argv) { return csafl::cli_main(argc, argv); }
