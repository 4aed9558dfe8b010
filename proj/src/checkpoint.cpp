#include "rtv/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace rtv {

namespace {

constexpr char kMagic[] = "rtv-ckpt-1";

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::map<std::string, double> Checkpoint::meta() const {
  std::map<std::string, double> m;
  for (const auto& e : entries)
    if (e.name.rfind("meta/", 0) == 0 && e.data.size() == 1)
      m[e.name.substr(5)] = e.data[0];
  return m;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, double>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic) - 1);

  struct Item {
    std::string name;
    Shape shape;
    const std::vector<double>* data;
    std::vector<double> owned;
  };
  std::vector<Item> items;
  for (const auto& [name, t] : params.items())
    items.push_back({name, t.shape(), &t.values(), {}});
  for (const auto& [key, val] : meta) {
    items.push_back({"meta/" + key, {}, nullptr, {val}});
    items.back().data = &items.back().owned;
  }

  write_pod<uint32_t>(os, static_cast<uint32_t>(items.size()));
  uint64_t offset = 0;
  for (const auto& it : items) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(it.name.size()));
    os.write(it.name.data(), static_cast<long>(it.name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(it.shape.size()));
    for (int d : it.shape) write_pod<uint32_t>(os, static_cast<uint32_t>(d));
    write_pod<uint64_t>(os, offset);
    offset += it.data->size() * sizeof(double);
  }
  for (const auto& it : items)
    os.write(reinterpret_cast<const char*>(it.data->data()),
             static_cast<long>(it.data->size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[sizeof(kMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not an rtv-ckpt-1 file");

  uint32_t count = read_pod<uint32_t>(is);
  Checkpoint ckpt;
  std::vector<uint64_t> offsets;
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    uint32_t name_len = read_pod<uint32_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    uint32_t ndim = read_pod<uint32_t>(is);
    for (uint32_t d = 0; d < ndim; ++d)
      e.shape.push_back(static_cast<int>(read_pod<uint32_t>(is)));
    offsets.push_back(read_pod<uint64_t>(is));
    ckpt.entries.push_back(std::move(e));
  }
  for (auto& e : ckpt.entries) {
    size_t n = 1;
    for (int d : e.shape) n *= static_cast<size_t>(d);
    e.data.resize(n);
    is.read(reinterpret_cast<char*>(e.data.data()), static_cast<long>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated data in " + path);
  }
  return ckpt;
}

void restore_params(ParamStore& params, const Checkpoint& ckpt,
                    const std::string& prefix) {
  std::string missing, mismatched;
  for (const auto& [name, t] : params.items()) {
    const CheckpointEntry* e = ckpt.find(prefix + name);
    if (!e) {
      missing += (missing.empty() ? "" : ", ") + prefix + name;
      continue;
    }
    if (e->shape != t.shape()) {
      mismatched += (mismatched.empty() ? "" : ", ") + prefix + name;
      continue;
    }
    Tensor handle = t;  // shares the underlying node
    handle.raw() = e->data;
  }
  if (!missing.empty() || !mismatched.empty())
    throw std::runtime_error("checkpoint restore failed; missing: [" + missing +
                             "] shape mismatch: [" + mismatched + "]");
}

}  // namespace rtv
