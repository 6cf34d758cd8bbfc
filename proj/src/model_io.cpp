#include <ebbsvm/model_io.hpp>

#include <fstream>
#include <string>

#include <ebbsvm/key_value.hpp>

namespace ebbsvm {

namespace {

constexpr const char* kFormat = "ebbsvm-linear-svm 1";

}  // namespace

void save_model(const LinearSvm& model, std::ostream& out) {
  KeyValueFile kv;
  kv.set("format", kFormat);
  kv.set("kernel", std::string(to_string(model.kernel.kind)));
  kv.set("dimension", std::to_string(model.dimension()));
  kv.set("C", format_hex(model.C));
  kv.set("intercept", format_hex(model.intercept));
  std::string weights;
  for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
    if (j) weights += ',';
    weights += format_hex(model.weights(j));
  }
  kv.set("weights", weights);
  kv.set("iterations", std::to_string(model.diagnostics.iterations));
  kv.set("kkt_violation", format_hex(model.diagnostics.kkt_violation));
  kv.set("dual_objective", format_hex(model.diagnostics.dual_objective));
  kv.set("primal_objective", format_hex(model.diagnostics.primal_objective));
  kv.set("converged", model.diagnostics.converged ? "true" : "false");
  kv.write(out);
}

LinearSvm load_model(std::istream& in, const std::string& origin) {
  const auto kv = KeyValueFile::parse(in, origin);
  if (kv.get_or("format", "") != kFormat)
    fail(ErrorKind::format, origin + ": not an " + std::string(kFormat) + " record");
  LinearSvm model;
  model.kernel.kind = parse_kernel_kind(kv.get("kernel"));
  const auto n = kv.get_u64("dimension");
  model.C = kv.get_double("C");
  model.intercept = kv.get_double("intercept");
  const std::string& text = kv.get("weights");
  const auto fields = text.empty() ? std::vector<std::string>{} : split(text, ',');
  if (fields.size() != n) fail(ErrorKind::format, origin + ": weight count differs from dimension");
  model.weights.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) model.weights(static_cast<Eigen::Index>(j)) = parse_double(fields[j]);
  model.diagnostics.iterations = static_cast<long long>(kv.get_u64("iterations"));
  model.diagnostics.kkt_violation = kv.get_double("kkt_violation");
  model.diagnostics.dual_objective = kv.get_double("dual_objective");
  model.diagnostics.primal_objective = kv.get_double("primal_objective");
  model.diagnostics.converged = parse_bool(kv.get("converged"));
  return model;
}

void save_model(const LinearSvm& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  save_model(model, out);
}

LinearSvm load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  return load_model(in, path.string());
}

}  // namespace ebbsvm
