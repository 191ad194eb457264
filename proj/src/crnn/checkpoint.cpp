// SPDX-License-Identifier: Apache-2.0
#include "rcs/crnn/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "rcs/detail/bytes.hpp"
#include "rcs/error.hpp"

namespace rcs::crnn {

namespace {

std::string shape_text(std::span<const std::size_t> dims) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) s << (i ? "," : "") << dims[i];
  s << ']';
  return s.str();
}

void append_string(std::vector<std::byte>& out, const std::string& text) {
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  for (char ch : text) out.push_back(static_cast<std::byte>(ch));
}

}  // namespace

std::vector<std::byte> serialize_checkpoint(const Crnn& model) {
  std::vector<std::byte> out;
  detail::append_tag(out, "CRNN");
  detail::append_le<std::uint32_t>(out, kCheckpointVersion);
  append_string(out, to_json(model.config()).dump());
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.tensors().size()));
  for (const auto& t : model.tensors()) {
    append_string(out, t.name);
    out.push_back(static_cast<std::byte>(t.shape.size()));
    for (std::size_t d : t.shape) detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) detail::append_le<float>(out, v);
  }
  return out;
}

void save_checkpoint(const Crnn& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path, serialize_checkpoint(model));
}

Crnn parse_checkpoint(std::span<const std::byte> bytes, const std::string& context, const ModelConfig* expected) {
  detail::ByteReader in(bytes, context);
  in.require(4, "magic");
  if (detail::read_tag(bytes, 0) != "CRNN") throw Error(ErrorKind::Load, context + ": not a checkpoint (bad magic)");
  in.read<std::uint32_t>("magic");
  const auto version = in.read<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::Load, context + ": unsupported checkpoint version " + std::to_string(version));
  const auto config_len = in.read<std::uint32_t>("config length");
  const std::string config_text = in.read_string(config_len, "config");
  ModelConfig stored;
  try {
    stored = model_config_from_json(nlohmann::json::parse(config_text));
    stored.validate();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Load, context + ": config is not valid JSON: " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::Load, context + ": " + e.what());
  }

  Crnn model(expected ? *expected : stored);
  auto& tensors = model.tensors();
  const auto count = in.read<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = in.read<std::uint32_t>("tensor name length");
    const std::string name = in.read_string(name_len, "tensor name");
    const auto rank = in.read<std::uint8_t>("rank of " + name);
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = in.read<std::uint32_t>("dims of " + name);
      n *= d;
    }
    if (k >= tensors.size())
      throw Error(ErrorKind::Shape, context + ": unexpected tensor '" + name + "' " + shape_text(dims));
    auto& t = tensors[k];
    if (t.name != name || t.shape != dims)
      throw Error(ErrorKind::Shape, context + ": tensor '" + t.name + "' expected " + shape_text(t.shape) +
                                        ", file has '" + name + "' " + shape_text(dims));
    in.require(n * sizeof(float), "data of " + name);
    for (float& v : t.data) {
      v = in.read<float>("data of " + name);
      if (!std::isfinite(v)) throw Error(ErrorKind::Load, context + ": non-finite value in tensor '" + name + "'");
    }
  }
  if (count < tensors.size())
    throw Error(ErrorKind::Shape, context + ": tensor '" + tensors[count].name + "' " +
                                      shape_text(tensors[count].shape) + " missing from file");
  if (in.remaining() != 0)
    throw Error(ErrorKind::Load, context + ": " + std::to_string(in.remaining()) + " trailing bytes");
  model.set_running_stats_initialised(true);
  return model;
}

Crnn load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(detail::read_file_bytes(path), path.string());
}

Crnn load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  return parse_checkpoint(detail::read_file_bytes(path), path.string(), &expected);
}

}  // namespace rcs::crnn
