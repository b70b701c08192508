#include "cspeech/cli.hpp"

int main(int argc, char** argv) { return cspeech::cli::run_cli(argc, argv); }
