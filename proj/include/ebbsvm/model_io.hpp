#pragma once

#include <filesystem>
#include <iosfwd>

#include <ebbsvm/svm.hpp>

namespace ebbsvm {

/// Text record "ebbsvm-linear-svm 1": n, C, kernel, weights, intercept and
/// diagnostics, with every real written as a hex float so a reload is bit-exact.
/// Dual coefficients are not stored.
void save_model(const LinearSvm& model, std::ostream& out);
LinearSvm load_model(std::istream& in, const std::string& origin = "<stream>");

void save_model(const LinearSvm& model, const std::filesystem::path& path);
LinearSvm load_model(const std::filesystem::path& path);

}  // namespace ebbsvm
