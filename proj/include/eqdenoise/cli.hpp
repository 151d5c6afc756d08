#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eqd::cli {

// Shared option bag filled by the argument parser; commands are plain
// functions so tests can drive them in-process.
struct Options {
    std::string config;
    std::string out = ".";
    std::string reference;
    uint64_t seed = 0;
    bool seed_set = false;
    bool dry_run = false;
    bool resume = false;
    std::vector<std::string> args;  // positional arguments
};

int cmd_verify_equivariance(const Options& opt);
int cmd_train(const Options& opt);
int cmd_denoise(const Options& opt);
int cmd_report(const Options& opt);

}  // namespace eqd::cli
