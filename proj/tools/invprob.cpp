#include "invprob/cli.hpp"

int main(int argc, char** argv) { return invprob::cli::cli_main(argc, argv); }
