#pragma once

#include <map>
#include <string>
#include <vector>

#include "rtv/tensor.hpp"

namespace rtv {

// Single-file checkpoint: "rtv-ckpt-1" tag, a manifest of (name, shape,
// offset) entries, then the raw little-endian f64 buffers. All models share
// this format; model configuration travels as "meta/<key>" scalar entries.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  std::map<std::string, double> meta() const;  // "meta/x" -> value
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, double>& meta = {});

Checkpoint load_checkpoint(const std::string& path);

// Copy values from a checkpoint into an existing store. Every store
// parameter must be present with a matching shape; on mismatch, throws
// listing the offending names.
void restore_params(ParamStore& params, const Checkpoint& ckpt,
                    const std::string& prefix = "");

}  // namespace rtv
