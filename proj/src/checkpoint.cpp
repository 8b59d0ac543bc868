#include "gmg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "gmg/errors.hpp"

namespace gmg {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'G', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& data() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const char* p, std::size_t n) : p_(p), end_(p + n) {}

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("checkpoint truncated");
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(p_[i])) << (8 * i);
    p_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    auto n = le<std::uint32_t>();
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  const char* p_;
  const char* end_;
};

std::uint32_t crc32_of(const std::string& s) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

struct Section {
  Shape shape;
  std::vector<double> values;
};

/// Every tensor the checkpoint stores, by section name.
std::vector<std::pair<std::string, Tensor*>> tensor_sections(Trainer& trainer) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& p : trainer.models().all_parameters()) out.emplace_back(p.name, p.tensor);
  auto moments = [&](const char* group, Adam& opt) {
    const auto& params = opt.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back(std::string("adam.") + group + ".m." + params[i].name, &opt.first_moments()[i]);
      out.emplace_back(std::string("adam.") + group + ".v." + params[i].name, &opt.second_moments()[i]);
    }
  };
  moments("generator", trainer.generator_optimizer());
  moments("guider", trainer.guider_optimizer());
  moments("discriminator", trainer.discriminator_optimizer());
  moments("latent", trainer.style_optimizer());
  return out;
}

}  // namespace

std::string serialize_checkpoint(Trainer& trainer) {
  nlohmann::json header = {
      {"config", trainer.config().to_json()},
      {"vocab", trainer.data().vocab.to_json()},
      {"grammar", trainer.data().grammar ? trainer.data().grammar->to_json() : nlohmann::json(nullptr)},
      {"stages", trainer.stages()},
      {"dims", trainer.models().dims.to_json()},
      {"num_labels", trainer.models().num_labels},
      {"optimizer_steps",
       {{"generator", trainer.generator_optimizer().steps()},
        {"guider", trainer.guider_optimizer().steps()},
        {"discriminator", trainer.discriminator_optimizer().steps()},
        {"latent", trainer.style_optimizer().steps()}}},
  };
  Writer payload;
  payload.str(header.dump());
  auto sections = tensor_sections(trainer);
  Tensor baseline = Tensor::scalar(trainer.baseline().value);
  sections.emplace_back("baseline", &baseline);
  payload.le(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, t] : sections) {
    payload.str(name);
    payload.le(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) payload.le(static_cast<std::uint64_t>(d));
    for (double v : t->values()) payload.f64(v);
  }

  Writer file;
  file.bytes(kMagic, 4);
  file.le(kCheckpointVersion);
  file.le(static_cast<std::uint64_t>(payload.data().size()));
  file.bytes(payload.data().data(), payload.data().size());
  file.le(crc32_of(payload.data()));
  return std::move(file.data());
}

void save_checkpoint(Trainer& trainer, const std::filesystem::path& path) {
  auto bytes = serialize_checkpoint(trainer);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::unique_ptr<Trainer> deserialize_checkpoint(const std::string& bytes, bool rebuild_data) {
  Reader file(bytes.data(), bytes.size());
  file.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  Reader rest(bytes.data() + 4, bytes.size() - 4);
  auto version = rest.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  auto length = rest.le<std::uint64_t>();
  const std::size_t offset = 4 + 4 + 8;
  if (bytes.size() != offset + length + 4) throw FormatError("checkpoint length mismatch");
  std::string payload = bytes.substr(offset, length);
  Reader tail(bytes.data() + offset + length, 4);
  if (tail.le<std::uint32_t>() != crc32_of(payload)) throw FormatError("checkpoint checksum mismatch");

  Reader in(payload.data(), payload.size());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  std::map<std::string, Section> sections;
  auto n = in.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = in.str();
    Section s;
    auto rank = in.le<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) s.shape.push_back(static_cast<std::size_t>(in.le<std::uint64_t>()));
    std::size_t count = shape_size(s.shape);
    in.need(count * 8);
    s.values.resize(count);
    for (auto& v : s.values) v = in.f64();
    sections.emplace(std::move(name), std::move(s));
  }
  if (!in.done()) throw FormatError("trailing bytes in checkpoint payload");

  std::unique_ptr<Trainer> trainer;
  try {
    RunConfig config = RunConfig::from_json(header.at("config"));
    Vocabulary vocab = Vocabulary::from_json(header.at("vocab"));
    auto num_labels = header.at("num_labels").get<std::size_t>();
    Dataset data;
    if (rebuild_data) {
      data = build_dataset(config, num_labels > 0);
      if (!(data.vocab == vocab)) throw FormatError("rebuilt dataset vocabulary differs from the checkpoint");
    } else {
      data.vocab = vocab;
      if (!header.at("grammar").is_null()) data.grammar = GrammarSpec::from_json(header.at("grammar"));
    }
    trainer = std::make_unique<Trainer>(std::move(config), std::move(data), num_labels);
    trainer->stages() = header.at("stages").get<std::vector<std::string>>();
    const auto& steps = header.at("optimizer_steps");
    trainer->generator_optimizer().set_steps(steps.at("generator").get<std::uint64_t>());
    trainer->guider_optimizer().set_steps(steps.at("guider").get<std::uint64_t>());
    trainer->discriminator_optimizer().set_steps(steps.at("discriminator").get<std::uint64_t>());
    trainer->style_optimizer().set_steps(steps.at("latent").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is incomplete: ") + e.what());
  }

  auto restore = [&](const std::string& name, Tensor& t) {
    auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("checkpoint lacks section " + name);
    if (it->second.shape != t.shape()) {
      throw FormatError("section " + name + " has shape " + shape_string(it->second.shape) + ", expected " +
                        shape_string(t.shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), t.mutable_values().begin());
    t.check_finite(name.c_str());
  };
  for (auto& [name, t] : tensor_sections(*trainer)) restore(name, *t);
  Tensor baseline = Tensor::scalar(0.0);
  restore("baseline", baseline);
  trainer->baseline().value = baseline[0];
  return trainer;
}

std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path, bool rebuild_data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), rebuild_data);
}

}  // namespace gmg
