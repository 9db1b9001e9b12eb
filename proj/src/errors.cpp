#include "pt/errors.hpp"

#include <algorithm>

namespace pt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension_error";
    case ErrorKind::Numeric: return "numeric_error";
    case ErrorKind::Index: return "index_error";
    case ErrorKind::Contract: return "contract_error";
    case ErrorKind::Config: return "config_error";
    case ErrorKind::Load: return "load_error";
    case ErrorKind::Format: return "format_error";
    case ErrorKind::Sampling: return "sampling_error";
    case ErrorKind::Query: return "query_error";
    case ErrorKind::ModelInput: return "model_input_error";
    case ErrorKind::Label: return "label_error";
    case ErrorKind::Corruption: return "corruption_error";
    case ErrorKind::Retrieval: return "retrieval_error";
    case ErrorKind::Io: return "io_error";
  }
  return "error";
}

namespace {

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + single_line(message)),
      kind_(kind),
      message_(single_line(message)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace pt
