#pragma once

// Binary snapshot format, magic "GDAC". Little endian throughout:
//
//   "GDAC"  u32 version  u64 meta_len  meta JSON  u32 count  records...
//   record: u64 name_len  name  u8 dtype(0=f32)  u32 rank  u32 dims[rank]
//           f32 payload, row major
//
// Every declared length is checked against the bytes actually present
// before anything is allocated, so a corrupt header cannot trigger a
// huge allocation.
//
// Two snapshot kinds sit on top of the container:
//   model    every parameter plus tracked state (w_avg) and the dims
//            needed to rebuild the module structure
//   adapted  only the parameters adaptation may touch (adaptor, output
//            projection, attribute classifier) plus the hash of the base
//            model file they were trained from; applying them onto a
//            different base is refused

#include <cstdint>
#include <string>
#include <vector>

#include "genda/nets.hpp"
#include "json.hpp"

namespace genda {

struct TensorRecord {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    nlohmann::json meta;
    std::vector<TensorRecord> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// fnv1a64 over the raw file bytes; ties adapted artifacts to their base
uint64_t file_hash(const std::string& path);
std::string hash_hex(uint64_t h);

// model snapshots ------------------------------------------------------

void save_model(const std::string& path, Model& model,
                nlohmann::json extra_meta = nlohmann::json::object());

struct LoadedModel {
    Model model;
    nlohmann::json meta;
};
LoadedModel load_model(const std::string& path);

// adapted artifacts ----------------------------------------------------

void save_artifacts(const std::string& path, Model& model, uint64_t source_hash,
                    nlohmann::json extra_meta = nlohmann::json::object());

// overwrites the adapted parameter subset of `model`; `base_hash` is the
// file hash of the snapshot `model` was loaded from
nlohmann::json apply_artifacts(Model& model, const std::string& artifacts_path,
                               uint64_t base_hash);

}  // namespace genda
