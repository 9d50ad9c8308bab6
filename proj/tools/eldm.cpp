#include "eldm/cli/app.hpp"

int main(int argc, char** argv) { return eldm::cli::run_cli(argc, argv); }
