#include "wasi/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return wasi::run_cli(std::move(args));
}
