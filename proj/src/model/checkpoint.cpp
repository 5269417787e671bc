#include "recip/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "recip/core/error.hpp"

namespace recip {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("truncated checkpoint '" + path + "'");
  }
  return v;
}

}  // namespace

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return r.value;
  }
  throw DataError("checkpoint has no record '" + name + "'");
}

void Checkpoint::set(const std::string& name, Tensor value) {
  for (auto& r : records) {
    if (r.name == name) {
      r.value = std::move(value);
      return;
    }
  }
  records.push_back({name, std::move(value)});
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    out.write("RDSN", 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.records.size()));
    for (const auto& r : ckpt.records) {
      put_u32(out, static_cast<std::uint32_t>(r.name.size()));
      out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      put_u32(out, static_cast<std::uint32_t>(r.value.rank()));
      for (auto d : r.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
      out.write(reinterpret_cast<const char*>(r.value.ptr()),
                static_cast<std::streamsize>(r.value.size() * sizeof(float)));
    }
    if (!out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + p + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "RDSN", 4) != 0) {
    throw DataError("'" + p + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(in, p);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + p + "' has unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(in, p);
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in, p);
    if (name_len > 4096) throw DataError("corrupt checkpoint '" + p + "' (name length)");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("truncated checkpoint '" + p + "'");
    const std::uint32_t rank = get_u32(in, p);
    if (rank == 0 || rank > 8) throw DataError("corrupt checkpoint '" + p + "' (rank)");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, p);
    std::vector<float> data(shape_volume(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float)))) {
      throw DataError("truncated checkpoint '" + p + "'");
    }
    try {
      ckpt.records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    } catch (const ShapeError& e) {
      throw DataError("corrupt checkpoint '" + p + "': " + e.what());
    }
  }
  return ckpt;
}

void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt, bool with_momentum) {
  for (const auto& e : store.entries()) ckpt.set(e.name, e.value);
  if (!with_momentum) return;
  for (const auto& e : store.entries()) ckpt.set(kMomentumPrefix + e.name, e.momentum);
}

void checkpoint_to_store(const Checkpoint& ckpt, ParamStore& store, bool with_momentum) {
  std::string problems;
  for (const auto& e : store.entries()) {
    if (!ckpt.contains(e.name)) {
      problems += "\n  " + e.name + ": expected " + shape_string(e.value.shape()) + ", missing";
      continue;
    }
    const Tensor& v = ckpt.get(e.name);
    if (v.shape() != e.value.shape()) {
      problems += "\n  " + e.name + ": expected " + shape_string(e.value.shape()) +
                  ", checkpoint has " + shape_string(v.shape());
    }
  }
  if (!problems.empty()) {
    throw ShapeError("checkpoint does not match the configured model:" + problems);
  }
  for (auto& e : store.entries()) {
    e.value = ckpt.get(e.name);
    const std::string mname = kMomentumPrefix + e.name;
    if (with_momentum && ckpt.contains(mname)) {
      const Tensor& m = ckpt.get(mname);
      require_shape(m, e.value.shape(), mname.c_str());
      e.momentum = m;
    }
    e.grad.fill(0.0f);
  }
}

}  // namespace recip
