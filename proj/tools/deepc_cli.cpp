#include "deepc/cli.hpp"

int main(int argc, char** argv) { return deepc::cli::run(argc, argv); }
