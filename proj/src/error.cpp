#include <ebbsvm/error.hpp>

namespace ebbsvm {

namespace {

std::string compose(ErrorKind kind, const std::string& message, const std::string& context) {
  std::string out(to_string(kind));
  out += ": ";
  if (!context.empty()) {
    out += "[";
    out += context;
    out += "] ";
  }
  out += message;
  return out;
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::schema: return "schema";
    case ErrorKind::degenerate_data: return "degenerate_data";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::time_limit: return "time_limit";
    case ErrorKind::training_failed: return "training_failed";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::string context)
    : std::runtime_error(compose(kind, message, context)),
      kind_(kind),
      message_(message),
      context_(std::move(context)) {}

Error Error::with_context(const std::string& outer) const {
  return Error(kind_, message_, context_.empty() ? outer : outer + " " + context_);
}

}  // namespace ebbsvm
