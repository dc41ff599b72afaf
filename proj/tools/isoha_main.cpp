#include "isoha/cli.hpp"

int main(int argc, char** argv) { return isoha::cli::dispatch(argc, argv); }
