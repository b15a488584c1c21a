#include <cstdio>

#include "CLI11.hpp"

int main(int argc, char** argv) {
    CLI::App app{"deepvol: neural implied-volatility surfaces, calibration and inference"};
    app.set_version_flag("--version", DEEPVOL_GIT_DESCRIBE);
    app.require_subcommand(0, 1);
    CLI11_PARSE(app, argc, argv);
    std::puts("no subcommand given; see --help");
    return 2;
}
