#include "gbias/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gbias {

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kMagic[8] = {'G', 'B', 'I', 'A', 'S', 'L', 'M', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) write_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::Parse, "checkpoint " + path + ": " + msg);
}

}  // namespace

void save_checkpoint(const LanguageModel& model, const std::string& path, const Json& metadata) {
  Json header;
  header["format_version"] = 1;
  header["config"] = lm_config_to_json(model.config());
  Json vocab = Json::array();
  for (std::size_t i = 0; i < model.vocab().size(); ++i) {
    vocab.push_back({model.vocab().words()[i], model.vocab().counts()[i]});
  }
  header["vocabulary"] = std::move(vocab);
  header["vocab_hash"] = model.vocab().hash();
  header["metadata"] = metadata;
  Json tensors = Json::array();
  model.params().for_each([&](const std::string& name, const auto& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  });
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint: " + path);
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.params().for_each([&](const std::string&, const auto& t) { write_doubles(out, t.data(), t.size()); });
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

LanguageModel load_checkpoint(const std::string& path, Json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) bad(path, "bad magic");
  const std::uint64_t header_len = read_u64(in);
  if (!in || header_len > (1ULL << 34)) bad(path, "bad header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) bad(path, "truncated header");

  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::exception& e) {
    bad(path, std::string("header is not valid JSON: ") + e.what());
  }

  LmConfig cfg;
  Vocabulary vocab;
  try {
    apply_lm_config(header.at("config"), cfg);
    std::ostringstream vs;
    for (const auto& entry : header.at("vocabulary")) {
      vs << entry.at(0).get<std::string>() << '\t' << entry.at(1).get<std::uint64_t>() << '\n';
    }
    std::istringstream vin(vs.str());
    vocab = Vocabulary::load(vin);
  } catch (const Json::exception& e) {
    bad(path, std::string("malformed header: ") + e.what());
  }
  if (header.value("vocab_hash", std::string()) != vocab.hash()) bad(path, "vocabulary hash mismatch");

  auto params = LstmParameters<double>::zeros(static_cast<Eigen::Index>(vocab.size()), cfg.emb_dim, cfg.hidden, cfg.layers);
  if (!header.contains("tensors") || !header["tensors"].is_array()) bad(path, "missing tensor list");
  const Json& tensors = header["tensors"];
  std::size_t k = 0;
  params.for_each([&](const std::string& name, auto& t) {
    if (k >= tensors.size()) bad(path, "missing tensor " + name);
    const Json& spec = tensors[k++];
    if (!spec.is_object() || spec.value("name", std::string()) != name || spec.value("rows", Eigen::Index{-1}) != t.rows() ||
        spec.value("cols", Eigen::Index{-1}) != t.cols()) {
      bad(path, "tensor " + name + " shape does not match config");
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = std::bit_cast<double>(read_u64(in));
    if (!in) bad(path, "truncated payload in tensor " + name);
  });
  if (k != tensors.size()) bad(path, "unexpected extra tensors");
  if (in.peek() != std::char_traits<char>::eof()) bad(path, "trailing bytes after payload");
  if (metadata) *metadata = header.value("metadata", Json::object());
  return LanguageModel(cfg, std::move(vocab), std::move(params));
}

}  // namespace gbias
