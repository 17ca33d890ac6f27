// include/mcsep/arrays.hpp

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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcsep/core.hpp"

namespace mcsep {

// Element types a manifest may declare. Complex values are interleaved
// (real, imag) float64 pairs; every payload is little-endian.
enum class DType { kFloat64, kComplex128, kUInt8, kInt64 };

const char *DTypeName(DType dtype);
DType ParseDType(const std::string &name);
std::size_t DTypeSize(DType dtype);

struct ManifestEntry {
  std::string name;
  DType dtype = DType::kFloat64;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;  // byte offset into `path`
  std::string path;        // payload file, relative to the manifest directory

  std::size_t num_elements() const;
  std::size_t num_bytes() const { return num_elements() * DTypeSize(dtype); }
};

struct ArrayManifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<ManifestEntry> entries;

  nlohmann::ordered_json ToJson() const;
  static ArrayManifest FromJson(const nlohmann::ordered_json &j);
};

struct NamedArray {
  std::string name;
  DType dtype = DType::kFloat64;
  std::vector<std::size_t> shape;
  std::vector<unsigned char> bytes;

  std::size_t num_elements() const;
};

// In-memory set of named arrays plus free-form metadata; insertion order is
// preserved so that saved archives are byte-stable.
class ArrayArchive {
 public:
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  void PutReal(const std::string &name, const std::vector<double> &values,
               std::vector<std::size_t> shape);
  void PutComplex(const std::string &name, const std::vector<cdouble> &values,
                  std::vector<std::size_t> shape);
  void PutUInt8(const std::string &name, const std::vector<std::uint8_t> &values,
                std::vector<std::size_t> shape);
  void PutInt64(const std::string &name, const std::vector<std::int64_t> &values,
                std::vector<std::size_t> shape);
  void Put(NamedArray array);

  bool Contains(const std::string &name) const;
  const NamedArray &Get(const std::string &name) const;
  const std::vector<NamedArray> &arrays() const { return arrays_; }
  std::size_t size() const { return arrays_.size(); }

  // Typed accessors throw kManifestMismatch on dtype disagreement and, when
  // `expected_shape` is non-empty, on shape disagreement.
  std::vector<double> GetReal(const std::string &name,
                              const std::vector<std::size_t> &expected_shape = {}) const;
  std::vector<cdouble> GetComplex(const std::string &name,
                                  const std::vector<std::size_t> &expected_shape = {}) const;
  std::vector<std::uint8_t> GetUInt8(const std::string &name,
                                     const std::vector<std::size_t> &expected_shape = {}) const;
  std::vector<std::int64_t> GetInt64(const std::string &name,
                                     const std::vector<std::size_t> &expected_shape = {}) const;

 private:
  const NamedArray &Checked(const std::string &name, DType dtype,
                            const std::vector<std::size_t> &expected_shape) const;

  std::vector<NamedArray> arrays_;
  std::map<std::string, std::size_t> index_;
};

// Writes `manifest_path` (JSON) and a sibling payload file named after the
// manifest stem with a ".bin" extension.
void SaveArrays(const ArrayArchive &archive,
                const std::filesystem::path &manifest_path);
ArrayArchive LoadArrays(const std::filesystem::path &manifest_path);

ArrayManifest ReadManifest(const std::filesystem::path &manifest_path);

// Spectrogram <-> archive helpers used by every module that persists state.
void PutSpectrogram(ArrayArchive &archive, const std::string &name,
                    const Spectrogram &spec);
Spectrogram GetSpectrogram(const ArrayArchive &archive, const std::string &name);
void PutMask(ArrayArchive &archive, const std::string &name,
             const ActivityMask &mask);
ActivityMask GetMask(const ArrayArchive &archive, const std::string &name);

}  // namespace mcsep
