// src/arrays.cpp

// Copyright 2026  The mcsep Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mcsep/arrays.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace mcsep {

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

namespace {

std::size_t Product(const std::vector<std::size_t> &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeString(const std::vector<std::size_t> &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
NamedArray MakeArray(const std::string &name, DType dtype,
                     const std::vector<T> &values,
                     std::vector<std::size_t> shape) {
  if (Product(shape) != values.size())
    throw Error(ErrorCode::kDimensionMismatch,
                "array '" + name + "' holds " + std::to_string(values.size()) +
                    " values but shape is " + ShapeString(shape));
  NamedArray a;
  a.name = name;
  a.dtype = dtype;
  a.shape = std::move(shape);
  a.bytes.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
  return a;
}

template <typename T>
std::vector<T> Unpack(const NamedArray &a) {
  std::vector<T> out(a.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), a.bytes.data(), a.bytes.size());
  return out;
}

}  // namespace

const char *DTypeName(DType dtype) {
  switch (dtype) {
    case DType::kFloat64: return "float64";
    case DType::kComplex128: return "complex128";
    case DType::kUInt8: return "uint8";
    case DType::kInt64: return "int64";
  }
  return "?";
}

DType ParseDType(const std::string &name) {
  if (name == "float64") return DType::kFloat64;
  if (name == "complex128") return DType::kComplex128;
  if (name == "uint8") return DType::kUInt8;
  if (name == "int64") return DType::kInt64;
  throw Error(ErrorCode::kManifestMismatch, "unknown dtype '" + name + "'");
}

std::size_t DTypeSize(DType dtype) {
  switch (dtype) {
    case DType::kFloat64: return 8;
    case DType::kComplex128: return 16;
    case DType::kUInt8: return 1;
    case DType::kInt64: return 8;
  }
  return 0;
}

std::size_t ManifestEntry::num_elements() const { return Product(shape); }
std::size_t NamedArray::num_elements() const { return Product(shape); }

nlohmann::ordered_json ArrayManifest::ToJson() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["metadata"] = metadata;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto &e : entries) {
    nlohmann::ordered_json je;
    je["name"] = e.name;
    je["dtype"] = DTypeName(e.dtype);
    je["shape"] = e.shape;
    je["offset"] = e.offset;
    je["path"] = e.path;
    j["entries"].push_back(std::move(je));
  }
  return j;
}

ArrayManifest ArrayManifest::FromJson(const nlohmann::ordered_json &j) {
  ArrayManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (j.contains("metadata")) m.metadata = j.at("metadata");
    for (const auto &je : j.at("entries")) {
      ManifestEntry e;
      e.name = je.at("name").get<std::string>();
      e.dtype = ParseDType(je.at("dtype").get<std::string>());
      e.shape = je.at("shape").get<std::vector<std::size_t>>();
      e.offset = je.at("offset").get<std::size_t>();
      e.path = je.at("path").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception &ex) {
    throw Error(ErrorCode::kManifestMismatch,
                std::string("malformed manifest: ") + ex.what());
  }
  if (m.version != kVersion)
    throw Error(ErrorCode::kManifestMismatch,
                "unsupported manifest version " + std::to_string(m.version));
  return m;
}

void ArrayArchive::Put(NamedArray array) {
  if (array.num_elements() * DTypeSize(array.dtype) != array.bytes.size())
    throw Error(ErrorCode::kDimensionMismatch,
                "array '" + array.name + "' payload size disagrees with shape");
  auto it = index_.find(array.name);
  if (it != index_.end()) {
    arrays_[it->second] = std::move(array);
    return;
  }
  index_[array.name] = arrays_.size();
  arrays_.push_back(std::move(array));
}

void ArrayArchive::PutReal(const std::string &name,
                           const std::vector<double> &values,
                           std::vector<std::size_t> shape) {
  Put(MakeArray(name, DType::kFloat64, values, std::move(shape)));
}

void ArrayArchive::PutComplex(const std::string &name,
                              const std::vector<cdouble> &values,
                              std::vector<std::size_t> shape) {
  Put(MakeArray(name, DType::kComplex128, values, std::move(shape)));
}

void ArrayArchive::PutUInt8(const std::string &name,
                            const std::vector<std::uint8_t> &values,
                            std::vector<std::size_t> shape) {
  Put(MakeArray(name, DType::kUInt8, values, std::move(shape)));
}

void ArrayArchive::PutInt64(const std::string &name,
                            const std::vector<std::int64_t> &values,
                            std::vector<std::size_t> shape) {
  Put(MakeArray(name, DType::kInt64, values, std::move(shape)));
}

bool ArrayArchive::Contains(const std::string &name) const {
  return index_.count(name) != 0;
}

const NamedArray &ArrayArchive::Get(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error(ErrorCode::kManifestMismatch, "no array named '" + name + "'");
  return arrays_[it->second];
}

const NamedArray &ArrayArchive::Checked(
    const std::string &name, DType dtype,
    const std::vector<std::size_t> &expected_shape) const {
  const NamedArray &a = Get(name);
  if (a.dtype != dtype)
    throw Error(ErrorCode::kManifestMismatch,
                "array '" + name + "' has dtype " + DTypeName(a.dtype) +
                    ", expected " + DTypeName(dtype));
  if (!expected_shape.empty() && a.shape != expected_shape)
    throw Error(ErrorCode::kManifestMismatch,
                "array '" + name + "' has shape " + ShapeString(a.shape) +
                    ", expected " + ShapeString(expected_shape));
  return a;
}

std::vector<double> ArrayArchive::GetReal(
    const std::string &name, const std::vector<std::size_t> &shape) const {
  return Unpack<double>(Checked(name, DType::kFloat64, shape));
}

std::vector<cdouble> ArrayArchive::GetComplex(
    const std::string &name, const std::vector<std::size_t> &shape) const {
  return Unpack<cdouble>(Checked(name, DType::kComplex128, shape));
}

std::vector<std::uint8_t> ArrayArchive::GetUInt8(
    const std::string &name, const std::vector<std::size_t> &shape) const {
  return Unpack<std::uint8_t>(Checked(name, DType::kUInt8, shape));
}

std::vector<std::int64_t> ArrayArchive::GetInt64(
    const std::string &name, const std::vector<std::size_t> &shape) const {
  return Unpack<std::int64_t>(Checked(name, DType::kInt64, shape));
}

void SaveArrays(const ArrayArchive &archive,
                const std::filesystem::path &manifest_path) {
  namespace fs = std::filesystem;
  const fs::path payload_name =
      manifest_path.stem().string() + std::string(".bin");
  const fs::path dir = manifest_path.parent_path();

  ArrayManifest manifest;
  manifest.metadata = archive.metadata;
  std::size_t offset = 0;
  for (const auto &a : archive.arrays()) {
    ManifestEntry e;
    e.name = a.name;
    e.dtype = a.dtype;
    e.shape = a.shape;
    e.offset = offset;
    e.path = payload_name.string();
    offset += a.bytes.size();
    manifest.entries.push_back(std::move(e));
  }

  std::ofstream payload(dir / payload_name, std::ios::binary | std::ios::trunc);
  if (!payload)
    throw Error(ErrorCode::kIoError,
                "cannot open " + (dir / payload_name).string() + " for writing");
  for (const auto &a : archive.arrays())
    payload.write(reinterpret_cast<const char *>(a.bytes.data()),
                  static_cast<std::streamsize>(a.bytes.size()));
  if (!payload) throw Error(ErrorCode::kIoError, "write failed for payload");

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::kIoError,
                "cannot open " + manifest_path.string() + " for writing");
  out << manifest.ToJson().dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIoError, "write failed for manifest");
}

ArrayManifest ReadManifest(const std::filesystem::path &manifest_path) {
  std::ifstream in(manifest_path);
  if (!in)
    throw Error(ErrorCode::kIoError, "cannot open " + manifest_path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &ex) {
    throw Error(ErrorCode::kManifestMismatch,
                manifest_path.string() + ": " + ex.what());
  }
  return ArrayManifest::FromJson(j);
}

ArrayArchive LoadArrays(const std::filesystem::path &manifest_path) {
  namespace fs = std::filesystem;
  const ArrayManifest manifest = ReadManifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();

  std::set<std::string> names;
  for (const auto &e : manifest.entries)
    if (!names.insert(e.name).second)
      throw Error(ErrorCode::kManifestMismatch,
                  "duplicate array name '" + e.name + "'");

  // Every payload file must be tiled exactly by the entries that reference it.
  std::map<std::string, std::vector<const ManifestEntry *>> by_file;
  for (const auto &e : manifest.entries) by_file[e.path].push_back(&e);
  std::map<std::string, std::vector<unsigned char>> contents;
  for (auto &[path, entries] : by_file) {
    std::ifstream in(dir / path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + (dir / path).string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    std::sort(entries.begin(), entries.end(),
              [](auto *a, auto *b) { return a->offset < b->offset; });
    std::size_t cursor = 0;
    for (const auto *e : entries) {
      if (e->offset != cursor)
        throw Error(ErrorCode::kManifestMismatch,
                    "entry '" + e->name + "' does not start where the previous ended");
      cursor += e->num_bytes();
    }
    if (cursor != bytes.size())
      throw Error(ErrorCode::kManifestMismatch,
                  path + " holds " + std::to_string(bytes.size()) +
                      " bytes but the manifest declares " + std::to_string(cursor));
    contents[path] = std::move(bytes);
  }

  ArrayArchive archive;
  archive.metadata = manifest.metadata;
  for (const auto &e : manifest.entries) {
    NamedArray a;
    a.name = e.name;
    a.dtype = e.dtype;
    a.shape = e.shape;
    const auto &bytes = contents.at(e.path);
    a.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(e.offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(e.offset + e.num_bytes()));
    archive.Put(std::move(a));
  }
  return archive;
}

void PutSpectrogram(ArrayArchive &archive, const std::string &name,
                    const Spectrogram &spec) {
  archive.PutComplex(name, spec.data(),
                     {spec.num_freqs(), spec.num_frames(), spec.num_channels()});
  archive.metadata["spectrograms"][name] = {{"sample_rate", spec.sample_rate()},
                                            {"hop", spec.hop()}};
}

Spectrogram GetSpectrogram(const ArrayArchive &archive, const std::string &name) {
  const NamedArray &a = archive.Get(name);
  if (a.shape.size() != 3)
    throw Error(ErrorCode::kManifestMismatch,
                "spectrogram '" + name + "' must be 3-D (F, T, M)");
  double sample_rate = 16000.0;
  std::size_t hop = 160;
  if (archive.metadata.contains("spectrograms") &&
      archive.metadata["spectrograms"].contains(name)) {
    const auto &info = archive.metadata["spectrograms"][name];
    sample_rate = info.value("sample_rate", sample_rate);
    hop = info.value("hop", hop);
  }
  auto spec = Spectrogram::FromData(a.shape[0], a.shape[1], a.shape[2],
                                    archive.GetComplex(name), sample_rate, hop);
  ValidateSpectrogram(spec);
  return spec;
}

void PutMask(ArrayArchive &archive, const std::string &name,
             const ActivityMask &mask) {
  archive.PutUInt8(name, mask.data(), {mask.num_sources(), mask.num_frames()});
}

ActivityMask GetMask(const ArrayArchive &archive, const std::string &name) {
  const NamedArray &a = archive.Get(name);
  if (a.shape.size() != 2)
    throw Error(ErrorCode::kManifestMismatch, "mask '" + name + "' must be 2-D");
  const auto values = archive.GetUInt8(name);
  ActivityMask mask(a.shape[0], a.shape[1]);
  for (std::size_t n = 0; n < a.shape[0]; ++n)
    for (std::size_t t = 0; t < a.shape[1]; ++t) {
      const auto v = values[n * a.shape[1] + t];
      if (v > 1)
        throw Error(ErrorCode::kManifestMismatch,
                    "mask '" + name + "' has a non-binary entry");
      mask.set(n, t, v != 0);
    }
  return mask;
}

}  // namespace mcsep
