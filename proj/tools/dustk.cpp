#include "cli/cli.hpp"

int main(int argc, char** argv) { return dustk::cli::dispatch(argc, argv); }
