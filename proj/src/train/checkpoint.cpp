// Copyright 2026 The laqd Authors
// SPDX-License-Identifier: Apache-2.0

#include "laqd/train/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace laqd::train {

namespace {

void put_records(std::ostream& os, const std::vector<NamedTensor>& recs) {
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(recs.size()));
  for (const auto& r : recs) {
    if (r.name.size() > 0xffff) throw io::FormatError("tensor name too long: " + r.name);
    io::put<std::uint16_t>(os, static_cast<std::uint16_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    io::put<std::uint8_t>(os, static_cast<std::uint8_t>(r.value.rank()));
    for (auto d : r.value.shape()) io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : r.value.values()) io::put<float>(os, static_cast<float>(v));
  }
}

std::vector<NamedTensor> get_records(std::istream& is) {
  std::vector<NamedTensor> recs(io::get<std::uint32_t>(is));
  for (auto& r : recs) {
    r.name.resize(io::get<std::uint16_t>(is));
    if (!r.name.empty() && !is.read(r.name.data(), static_cast<std::streamsize>(r.name.size()))) {
      throw io::FormatError("truncated tensor name");
    }
    const auto rank = io::get<std::uint8_t>(is);
    diff::Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(io::get<std::uint32_t>(is));
    std::vector<double> v(diff::shape_size(shape));
    for (auto& x : v) x = io::get<float>(is);
    r.value = diff::Tensor(std::move(shape), std::move(v));
  }
  return recs;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  io::put_magic(os, "LAQD");
  io::put<std::uint32_t>(os, kCheckpointVersion);
  io::put<std::uint64_t>(os, ck.step);
  io::put_string(os, ck.config);
  put_records(os, ck.params);
  put_records(os, ck.moments);
  io::put_string(os, ck.state);
}

Checkpoint read_checkpoint(std::istream& is) {
  io::expect_magic(is, "LAQD");
  const auto version = io::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw io::FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.step = io::get<std::uint64_t>(is);
  ck.config = io::get_string(is);
  ck.params = get_records(is);
  ck.moments = get_records(is);
  ck.state = io::get_string(is);
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  // Write then rename so a crash never leaves a half-written checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    write_checkpoint(os, ck);
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint not found: " + path);
  return read_checkpoint(is);
}

}  // namespace laqd::train
