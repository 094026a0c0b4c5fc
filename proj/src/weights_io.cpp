#include "binary_io.hpp"
#include "vseg/unet.hpp"

#include <array>
#include <cstring>

namespace vseg {

namespace {
constexpr std::array<char, 8> kWeightMagic = {'V', 'S', 'E', 'G', 'W', '1', '\0', '\0'};
}

std::vector<char> encode_weights(const WeightBundle& bundle) {
  detail::ByteWriter w;
  w.put_bytes(kWeightMagic.data(), kWeightMagic.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bundle.tensors.size()));
  w.put_string(bundle.fingerprint);
  for (const auto& t : bundle.tensors) {
    w.put_string(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
  }
  return w.bytes();
}

WeightBundle decode_weights(std::vector<char> bytes, const std::string& source) {
  detail::ByteReader r(std::move(bytes), source);
  std::array<char, 8> magic{};
  r.get_bytes(magic.data(), magic.size(), "magic");
  if (magic != kWeightMagic) throw IoError(source + ": not a VSEGW1 weight file (magic mismatch)");
  const auto count = r.get<std::uint32_t>("tensor count");
  WeightBundle raw;
  raw.fingerprint = r.get_string("fingerprint");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.get_string("tensor name");
    const auto ndim = r.get<std::uint32_t>("tensor rank");
    if (ndim > 8) throw IoError(source + ": tensor " + t.name + " has implausible rank " + std::to_string(ndim));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<int>(r.get<std::uint32_t>("tensor dims")));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    if (n * sizeof(float) > r.remaining()) {
      throw IoError(source + ": truncated at byte offset " + std::to_string(r.offset()) + " in tensor " + t.name);
    }
    t.values.resize(n);
    r.get_bytes(t.values.data(), n * sizeof(float), "tensor values");
    raw.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw IoError(source + ": " + std::to_string(r.remaining()) + " trailing bytes at offset " +
                  std::to_string(r.offset()));
  }
  validate_weights(raw);

  WeightBundle bundle{raw.fingerprint, {}};
  for (const auto& spec : unet_architecture().tensors) bundle.tensors.push_back(std::move(*raw.find(spec.name)));
  return bundle;
}

WeightBundle load_weights(const std::filesystem::path& path) {
  return decode_weights(detail::read_file(path.string()), path.string());
}

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  validate_weights(bundle);
  detail::write_file(path.string(), encode_weights(bundle));
}

}  // namespace vseg
