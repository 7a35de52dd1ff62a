#include "synspec/cli.hpp"

int main(int argc, char** argv) { return synspec::cli::dispatch(argc, argv); }
