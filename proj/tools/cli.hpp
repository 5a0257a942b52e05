#pragma once

#include <cdemr/io.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace cdemr::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;     // I/O and unexpected errors
inline constexpr int kExitValidation = 2;  // bad arguments, schema, labels, empty strata
inline constexpr int kExitNumerical = 3;   // fitting failures

// Runs one command line (without the program name). Data goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Main-effects working models over every column of the dataset.
NuisanceSpec default_spec(const Dataset& data);

}  // namespace cdemr::cli
