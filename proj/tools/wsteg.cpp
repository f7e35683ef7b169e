#include "wsteg/cli.hpp"

int main(int argc, char** argv) { return wsteg::cli::dispatch(argc, argv); }
