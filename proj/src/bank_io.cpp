#include <ebbsvm/bank_io.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <ebbsvm/key_value.hpp>
#include <ebbsvm/model_io.hpp>

namespace ebbsvm {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "ebbsvm-bank 1";

std::string cell_name(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%0*zu", prefix, width, value);
  return buf;
}

fs::path model_path(const fs::path& dir, const char* kind, std::size_t t, std::size_t b, const char* ext) {
  return dir / kind / cell_name("theta", t, 2) / (cell_name("replicate", b, 4) + ext);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  return in;
}

}  // namespace

void write_ids(const std::vector<std::size_t>& ids, const fs::path& path) {
  auto out = open_out(path);
  for (auto id : ids) out << id << '\n';
}

std::vector<std::size_t> read_ids(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::size_t> ids;
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) ids.push_back(parse_u64(trim(line)));
  return ids;
}

void save_bank(const EnsembleBank& bank, const fs::path& dir) {
  fs::create_directories(dir);
  KeyValueFile kv;
  kv.set("format", kFormat);
  kv.set("replicates", std::to_string(bank.replicates));
  kv.set("metric", std::string(to_string(bank.metric)));
  kv.set("master_seed", std::to_string(bank.master_seed));
  kv.set("learner", bank.learner);
  kv.set("learner_settings", bank.learner_settings);
  kv.set("dimension", std::to_string(bank.dimension));
  kv.set("training_size", std::to_string(bank.training_ids.size()));
  std::string costs, kernels;
  for (std::size_t t = 0; t < bank.grid.size(); ++t) {
    costs += (t ? "," : "") + format_hex(bank.grid[t].C);
    kernels += (t ? "," : "") + std::string(to_string(bank.grid[t].kernel.kind));
  }
  kv.set("grid", costs);
  kv.set("kernels", kernels);
  {
    auto out = open_out(dir / "bank.manifest");
    kv.write(out);
  }
  write_ids(bank.training_ids, dir / "training_ids.txt");

  auto table = open_out(dir / "replicates.csv");
  table << "theta,replicate,seed,attempts,failed,oob_size,oob_performance,failure\n";
  for (std::size_t t = 0; t < bank.grid.size(); ++t) {
    for (std::size_t b = 0; b < bank.replicates; ++b) {
      const auto& rep = bank.models[t][b];
      std::string failure = rep.failure;
      for (auto& c : failure)
        if (c == ',' || c == '\n') c = ';';
      table << t << ',' << b << ',' << rep.seed << ',' << rep.attempts << ',' << (rep.failed ? 1 : 0) << ','
            << rep.out_of_bag.size() << ',' << (rep.oob_performance ? format_hex(*rep.oob_performance) : "") << ','
            << failure << '\n';
      if (rep.failed) continue;
      const auto path = model_path(dir, "models", t, b, ".model");
      fs::create_directories(path.parent_path());
      save_model(rep.model, path);
      if (rep.certificate) {
        const auto cpath = model_path(dir, "certificates", t, b, ".txt");
        fs::create_directories(cpath.parent_path());
        auto out = open_out(cpath);
        rep.certificate->save(out);
      }
    }
  }
}

EnsembleBank load_bank(const fs::path& dir) {
  const auto kv = KeyValueFile::read(dir / "bank.manifest");
  if (kv.get_or("format", "") != kFormat) fail(ErrorKind::format, (dir / "bank.manifest").string() + ": not a bank");
  EnsembleBank bank;
  bank.replicates = kv.get_u64("replicates");
  bank.metric = parse_metric(kv.get("metric"));
  bank.master_seed = kv.get_u64("master_seed");
  bank.learner = kv.get("learner");
  bank.learner_settings = kv.get_or("learner_settings", "");
  bank.dimension = kv.get_u64("dimension");
  const auto costs = split(kv.get("grid"), ',');
  const auto kernels = split(kv.get("kernels"), ',');
  if (costs.size() != kernels.size()) fail(ErrorKind::format, "bank.manifest: grid and kernels differ in length");
  for (std::size_t t = 0; t < costs.size(); ++t)
    bank.grid.values.push_back({parse_double(costs[t]), KernelSpec{parse_kernel_kind(kernels[t])}});
  bank.grid.validate();
  bank.training_ids = read_ids(dir / "training_ids.txt");
  if (bank.training_ids.size() != kv.get_u64("training_size"))
    fail(ErrorKind::format, "training_ids.txt does not match bank.manifest");
  bank.models.assign(bank.grid.size(), std::vector<Replicate>(bank.replicates));

  auto table = open_in(dir / "replicates.csv");
  std::string line;
  std::getline(table, line);
  std::size_t seen = 0;
  while (std::getline(table, line)) {
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    if (f.size() == 7) f.emplace_back();
    if (f.size() != 8) fail(ErrorKind::format, "replicates.csv: malformed row '" + line + "'");
    const auto t = parse_u64(f[0]), b = parse_u64(f[1]);
    if (t >= bank.grid.size() || b >= bank.replicates) fail(ErrorKind::format, "replicates.csv: cell out of range");
    auto& rep = bank.models[t][b];
    rep.seed = parse_u64(f[2]);
    rep.attempts = static_cast<unsigned>(parse_u64(f[3]));
    rep.failed = f[4] == "1";
    if (!f[6].empty()) rep.oob_performance = parse_double(f[6]);
    rep.failure = f[7];
    ++seen;
    if (rep.failed) continue;
    rep.out_of_bag = bootstrap_sample(bank.training_ids.size(), rep.seed).out_of_bag;
    if (rep.out_of_bag.size() != parse_u64(f[5]))
      fail(ErrorKind::format, "replicates.csv: regenerated out-of-bag set differs for theta=" + std::to_string(t) +
                                  " replicate=" + std::to_string(b));
    rep.model = load_model(model_path(dir, "models", t, b, ".model"));
    const auto cpath = model_path(dir, "certificates", t, b, ".txt");
    if (fs::exists(cpath)) {
      auto in = open_in(cpath);
      rep.certificate = CsvmCertificate::load(in, cpath.string());
    }
  }
  if (seen != bank.grid.size() * bank.replicates) fail(ErrorKind::format, "replicates.csv: missing cells");
  return bank;
}

}  // namespace ebbsvm
