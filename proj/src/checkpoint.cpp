#include "aldk/checkpoint.hpp"

#include "aldk/byte_io.hpp"
#include "aldk/vol_io.hpp"

namespace aldk {
namespace {

constexpr std::string_view kMagic = "ALDK";

void put_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

std::pair<std::string, Tensor> get_tensor(ByteReader& r) {
  std::string name = r.str();
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw FormatError(FormatError::Kind::Inconsistent, r.origin() + ": implausible tensor rank");
  Shape shape;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape.push_back(r.u32());
    if (shape.back() == 0) throw FormatError(FormatError::Kind::Inconsistent, r.origin() + ": zero extent");
    n *= static_cast<std::uint64_t>(shape.back());
  }
  r.need(n * 4);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = r.f32();
  return {std::move(name), std::move(t)};
}

void put_params(ByteWriter& w, const ParameterCollection& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) put_tensor(w, p.name, p.value());
}

ParameterCollection get_params(ByteReader& r) {
  ParameterCollection params;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(r);
    params.add(std::move(name), std::move(t));
  }
  return params;
}

void put_adam(ByteWriter& w, const AdamState& s, const ParameterCollection& params) {
  w.u64(static_cast<std::uint64_t>(s.step));
  w.f64(s.hyper.beta1);
  w.f64(s.hyper.beta2);
  w.f64(s.hyper.epsilon);
  w.u32(static_cast<std::uint32_t>(s.first.size()));
  for (std::size_t i = 0; i < s.first.size(); ++i) {
    put_tensor(w, params[i].name + ".m", s.first[i]);
    put_tensor(w, params[i].name + ".v", s.second[i]);
  }
}

AdamState get_adam(ByteReader& r, const ParameterCollection& params) {
  AdamState s;
  s.step = static_cast<std::int64_t>(r.u64());
  s.hyper.beta1 = r.f64();
  s.hyper.beta2 = r.f64();
  s.hyper.epsilon = r.f64();
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw FormatError(FormatError::Kind::Inconsistent, r.origin() + ": optimizer state does not match parameters");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto m = get_tensor(r).second;
    auto v = get_tensor(r).second;
    if (!m.same_shape(params[i].value()) || !v.same_shape(params[i].value()))
      throw FormatError(FormatError::Kind::Inconsistent, r.origin() + ": moment shape mismatch");
    s.first.push_back(std::move(m));
    s.second.push_back(std::move(v));
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainState& s) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.str(to_json(s.config).dump());
  put_params(w, s.student);
  put_params(w, s.critic);
  put_adam(w, s.student_opt, s.student);
  put_adam(w, s.critic_opt, s.critic);
  w.u64(static_cast<std::uint64_t>(s.iteration));
  w.u64(s.samples_drawn);
  return std::move(w.bytes());
}

TrainState decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  using K = FormatError::Kind;
  ByteReader r(bytes, origin);
  if (r.raw(kMagic.size()) != kMagic) throw FormatError(K::BadMagic, origin + ": not a checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError(K::BadVersion, origin + ": unsupported checkpoint version " + std::to_string(v));
  TrainState s;
  try {
    s.config = train_config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(K::Inconsistent, origin + ": bad config section: " + e.what());
  }
  s.student = get_params(r);
  s.critic = get_params(r);
  s.student_opt = get_adam(r, s.student);
  s.critic_opt = get_adam(r, s.critic);
  s.iteration = static_cast<std::int64_t>(r.u64());
  s.samples_drawn = r.u64();
  if (r.remaining() != 0) throw FormatError(K::Inconsistent, origin + ": trailing bytes");
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  write_file(path, encode_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace aldk
