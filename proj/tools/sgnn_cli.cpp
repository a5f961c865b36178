#include "sgnn/cli.hpp"

int main(int argc, char** argv) { return sgnn::cli_dispatch(argc, argv); }
