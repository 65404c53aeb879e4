#pragma once

// On-disk formats. Every tensor record is an ASCII header line
//
//   L2S1 <kind> <dim>...\n
//
// followed by the entries as little-endian IEEE-754 doubles, row-major.
// Kinds are "matrix" (two dims) and "vector" (one dim); a file may hold
// several records back to back. Model files start with
//
//   L2S1 model <version> <r> <L> <d>\n
//
// then a matrix record with the r x d cluster weights, a one-entry vector
// record with the budget, and r candidate lists, each a little-endian
// uint64 count followed by that many ascending uint32 label ids.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s {

inline constexpr std::uint32_t kModelFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

enum class TensorKind { matrix, vector };

struct TensorRecord {
  TensorKind kind = TensorKind::matrix;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

void write_record(std::ostream& out, TensorKind kind, std::span<const std::size_t> dims,
                  std::span<const double> values);
/// Reads one record starting at `offset`, which is advanced past it.
TensorRecord read_record(std::istream& in, std::uint64_t& offset);

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m);
void save_vector(const std::filesystem::path& path, const DenseVector& v);
/// Single-record files of the given kind.
TensorRecord load_tensor(const std::filesystem::path& path, TensorKind kind);
DenseMatrix load_matrix(const std::filesystem::path& path);
DenseVector load_vector(const std::filesystem::path& path);

/// Layer file: W (L x d matrix) then b (length-L vector).
void save_layer(const std::filesystem::path& path, const SoftmaxLayer& layer);
SoftmaxLayer load_layer(const std::filesystem::path& path);

void save_contexts(const std::filesystem::path& path, const ContextSet& contexts);
ContextSet load_contexts(const std::filesystem::path& path);

/// Contexts paired with one target token each, for perplexity.
struct EvalStream {
  ContextSet contexts;
  std::vector<LabelId> targets;
};
/// Eval file: contexts (n x d matrix) then targets (length-n vector of ids).
void save_eval_stream(const std::filesystem::path& path, const EvalStream& stream);
EvalStream load_eval_stream(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const ScreeningModel& model);
ScreeningModel load_model(const std::filesystem::path& path);

}  // namespace l2s
