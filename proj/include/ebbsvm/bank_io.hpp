#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <ebbsvm/ensemble.hpp>

namespace ebbsvm {

/// Directory layout:
///   bank.manifest                        grid, B, metric, seed, learner
///   replicates.csv                       per (theta, b): seed, attempts, status, OOB size and performance
///   training_ids.txt                     one id per line, training-set order
///   models/theta-TT/replicate-BBBB.model one linear model per usable replicate
///   certificates/theta-TT/replicate-BBBB.txt  constrained-SVM certificates
/// Out-of-bag sets are regenerated from the stored seeds on load.
void save_bank(const EnsembleBank& bank, const std::filesystem::path& dir);
EnsembleBank load_bank(const std::filesystem::path& dir);

void write_ids(const std::vector<std::size_t>& ids, const std::filesystem::path& path);
std::vector<std::size_t> read_ids(const std::filesystem::path& path);

}  // namespace ebbsvm
