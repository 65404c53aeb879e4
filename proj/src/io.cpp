#include "l2s/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace l2s {

namespace {

constexpr std::string_view kMagic = "L2S1";
constexpr std::size_t kMaxHeader = 256;

const char* kind_name(TensorKind kind) { return kind == TensorKind::matrix ? "matrix" : "vector"; }

void put_u64(std::ostream& out, std::uint64_t x) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

void put_u32(std::ostream& out, std::uint32_t x) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t x = 0;
  for (int i = 0; i < bytes; ++i) x |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return x;
}

// Reads exactly `n` bytes or throws naming the shortfall.
std::vector<unsigned char> read_exact(std::istream& in, std::uint64_t n, std::uint64_t& offset,
                                      const char* what) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != n) {
    throw FormatError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                          " bytes, got " + std::to_string(got),
                      offset + got);
  }
  offset += n;
  return buf;
}

std::vector<std::string> read_header(std::istream& in, std::uint64_t& offset) {
  const std::uint64_t start = offset;
  std::string line;
  for (;;) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      throw FormatError(line.empty() ? "missing header" : "header not terminated by newline",
                        start + line.size());
    }
    if (c == '\n') break;
    line.push_back(static_cast<char>(c));
    if (line.size() > kMaxHeader) throw FormatError("header longer than 256 bytes", start);
  }
  offset += line.size() + 1;

  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t next = line.find(' ', pos);
    const std::size_t end = next == std::string::npos ? line.size() : next;
    tokens.push_back(line.substr(pos, end - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (tokens.empty() || tokens[0] != kMagic) {
    throw FormatError("bad magic: expected \"L2S1\"", start);
  }
  return tokens;
}

std::size_t parse_count(const std::string& token, std::uint64_t offset, const char* what) {
  std::size_t value = 0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, value);
  if (token.empty() || res.ec != std::errc() || res.ptr != last) {
    throw FormatError(std::string("malformed ") + what + " \"" + token + "\"", offset);
  }
  return value;
}

void expect_eof(std::istream& in, std::uint64_t offset) {
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes", offset);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

DenseMatrix as_matrix(TensorRecord rec) {
  return DenseMatrix(rec.dims[0], rec.dims[1], std::move(rec.values));
}

TensorRecord expect_kind(TensorRecord rec, TensorKind kind, std::uint64_t offset) {
  if (rec.kind != kind) {
    throw FormatError(std::string("expected a ") + kind_name(kind) + " record, found " +
                          kind_name(rec.kind),
                      offset);
  }
  return rec;
}

}  // namespace

void write_record(std::ostream& out, TensorKind kind, std::span<const std::size_t> dims,
                  std::span<const double> values) {
  std::string header(kMagic);
  header += ' ';
  header += kind_name(kind);
  for (std::size_t d : dims) header += ' ' + std::to_string(d);
  header += '\n';
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

TensorRecord read_record(std::istream& in, std::uint64_t& offset) {
  const std::uint64_t start = offset;
  const auto tokens = read_header(in, offset);
  if (tokens.size() < 2) throw FormatError("header has no kind tag", start);

  TensorRecord rec;
  std::size_t want_dims = 0;
  if (tokens[1] == "matrix") {
    rec.kind = TensorKind::matrix;
    want_dims = 2;
  } else if (tokens[1] == "vector") {
    rec.kind = TensorKind::vector;
    want_dims = 1;
  } else {
    throw FormatError("unknown kind \"" + tokens[1] + "\"", start);
  }
  if (tokens.size() - 2 != want_dims) {
    throw FormatError(tokens[1] + " needs " + std::to_string(want_dims) + " dims, header has " +
                          std::to_string(tokens.size() - 2),
                      start);
  }
  std::uint64_t count = 1;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const std::size_t d = parse_count(tokens[i], start, "dimension");
    if (d == 0) throw FormatError("empty dimension in header", start);
    rec.dims.push_back(d);
    count *= d;
  }

  const std::uint64_t payload_at = offset;
  const auto bytes = read_exact(in, 8 * count, offset, "payload");
  rec.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double v = std::bit_cast<double>(get_le(bytes.data() + 8 * i, 8));
    if (!std::isfinite(v)) throw FormatError("non-finite entry", payload_at + 8 * i);
    rec.values[i] = v;
  }
  return rec;
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
  auto out = open_out(path);
  const std::array<std::size_t, 2> dims{m.rows(), m.cols()};
  write_record(out, TensorKind::matrix, dims, m.data());
  finish(out, path);
}

void save_vector(const std::filesystem::path& path, const DenseVector& v) {
  auto out = open_out(path);
  const std::array<std::size_t, 1> dims{v.size()};
  write_record(out, TensorKind::vector, dims, v.span());
  finish(out, path);
}

TensorRecord load_tensor(const std::filesystem::path& path, TensorKind kind) {
  auto in = open_in(path);
  std::uint64_t offset = 0;
  TensorRecord rec = expect_kind(read_record(in, offset), kind, 0);
  expect_eof(in, offset);
  return rec;
}

DenseMatrix load_matrix(const std::filesystem::path& path) {
  return as_matrix(load_tensor(path, TensorKind::matrix));
}

DenseVector load_vector(const std::filesystem::path& path) {
  return DenseVector(std::move(load_tensor(path, TensorKind::vector).values));
}

void save_layer(const std::filesystem::path& path, const SoftmaxLayer& layer) {
  auto out = open_out(path);
  const std::array<std::size_t, 2> wd{layer.vocab_size(), layer.dim()};
  const std::array<std::size_t, 1> bd{layer.vocab_size()};
  write_record(out, TensorKind::matrix, wd, layer.weights().data());
  write_record(out, TensorKind::vector, bd, layer.bias().span());
  finish(out, path);
}

SoftmaxLayer load_layer(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::uint64_t offset = 0;
  auto w = expect_kind(read_record(in, offset), TensorKind::matrix, 0);
  const std::uint64_t bias_at = offset;
  auto b = expect_kind(read_record(in, offset), TensorKind::vector, bias_at);
  expect_eof(in, offset);
  if (b.dims[0] != w.dims[0]) {
    throw FormatError("bias length " + std::to_string(b.dims[0]) + " does not match " +
                          std::to_string(w.dims[0]) + " weight rows",
                      bias_at);
  }
  return SoftmaxLayer(as_matrix(std::move(w)), DenseVector(std::move(b.values)));
}

void save_contexts(const std::filesystem::path& path, const ContextSet& contexts) {
  save_matrix(path, contexts.matrix());
}

ContextSet load_contexts(const std::filesystem::path& path) { return ContextSet(load_matrix(path)); }

void save_eval_stream(const std::filesystem::path& path, const EvalStream& stream) {
  if (stream.targets.size() != stream.contexts.size()) {
    throw std::invalid_argument("save_eval_stream: " + std::to_string(stream.contexts.size()) +
                                " contexts vs " + std::to_string(stream.targets.size()) +
                                " targets");
  }
  auto out = open_out(path);
  const std::array<std::size_t, 2> hd{stream.contexts.size(), stream.contexts.dim()};
  const std::array<std::size_t, 1> td{stream.targets.size()};
  std::vector<double> targets(stream.targets.begin(), stream.targets.end());
  write_record(out, TensorKind::matrix, hd, stream.contexts.matrix().data());
  write_record(out, TensorKind::vector, td, targets);
  finish(out, path);
}

EvalStream load_eval_stream(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::uint64_t offset = 0;
  auto h = expect_kind(read_record(in, offset), TensorKind::matrix, 0);
  const std::uint64_t targets_at = offset;
  auto t = expect_kind(read_record(in, offset), TensorKind::vector, targets_at);
  expect_eof(in, offset);
  if (t.dims[0] != h.dims[0]) {
    throw FormatError("target count does not match context count", targets_at);
  }
  EvalStream stream;
  stream.contexts = ContextSet(as_matrix(std::move(h)));
  stream.targets.reserve(t.values.size());
  for (double v : t.values) {
    if (v < 0.0 || v != std::floor(v) || v > 4294967295.0) {
      throw FormatError("target is not a label id", targets_at);
    }
    stream.targets.push_back(static_cast<LabelId>(v));
  }
  return stream;
}

void save_model(const std::filesystem::path& path, const ScreeningModel& model) {
  auto out = open_out(path);
  const std::string header = std::string(kMagic) + " model " +
                             std::to_string(kModelFormatVersion) + " " +
                             std::to_string(model.clusters()) + " " +
                             std::to_string(model.vocab_size()) + " " +
                             std::to_string(model.dim()) + "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::array<std::size_t, 2> vd{model.clusters(), model.dim()};
  const std::array<std::size_t, 1> bd{1};
  const std::array<double, 1> budget{model.budget()};
  write_record(out, TensorKind::matrix, vd, model.cluster_weights().data());
  write_record(out, TensorKind::vector, bd, budget);
  for (const auto& c : model.candidate_sets()) {
    put_u64(out, c.size());
    for (LabelId s : c.members()) put_u32(out, s);
  }
  finish(out, path);
}

ScreeningModel load_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::uint64_t offset = 0;
  const auto tokens = read_header(in, offset);
  if (tokens.size() != 6 || tokens[1] != "model") {
    throw FormatError("expected header \"L2S1 model <version> <r> <L> <d>\"", 0);
  }
  const std::size_t version = parse_count(tokens[2], 0, "version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelFormatVersion) + ")",
                      0);
  }
  const std::size_t r = parse_count(tokens[3], 0, "cluster count");
  const std::size_t vocab = parse_count(tokens[4], 0, "vocabulary size");
  const std::size_t dim = parse_count(tokens[5], 0, "dimension");
  if (r == 0 || vocab == 0 || dim == 0) throw FormatError("empty dimension in header", 0);

  const std::uint64_t weights_at = offset;
  auto w = expect_kind(read_record(in, offset), TensorKind::matrix, weights_at);
  if (w.dims[0] != r || w.dims[1] != dim) {
    throw FormatError("cluster weights are " + shape_string(w.dims[0], w.dims[1]) +
                          ", header says " + shape_string(r, dim),
                      weights_at);
  }
  const std::uint64_t budget_at = offset;
  auto b = expect_kind(read_record(in, offset), TensorKind::vector, budget_at);
  if (b.dims[0] != 1) throw FormatError("budget record must hold one entry", budget_at);

  std::vector<CandidateSet> sets;
  sets.reserve(r);
  for (std::size_t t = 0; t < r; ++t) {
    const std::uint64_t list_at = offset;
    const auto head = read_exact(in, 8, offset, "candidate list length");
    const std::uint64_t count = get_le(head.data(), 8);
    if (count > vocab) {
      throw FormatError("candidate list of " + std::to_string(count) + " exceeds vocabulary",
                        list_at);
    }
    const auto body = read_exact(in, 4 * count, offset, "candidate list");
    std::vector<LabelId> ids(count);
    for (std::uint64_t j = 0; j < count; ++j) {
      ids[j] = static_cast<LabelId>(get_le(body.data() + 4 * j, 4));
      if (ids[j] >= vocab || (j > 0 && ids[j] <= ids[j - 1])) {
        throw FormatError("candidate ids must be ascending and below " + std::to_string(vocab),
                          list_at + 8 + 4 * j);
      }
    }
    sets.emplace_back(vocab, std::move(ids));
  }
  expect_eof(in, offset);
  return ScreeningModel(as_matrix(std::move(w)), std::move(sets), b.values[0]);
}

}  // namespace l2s
