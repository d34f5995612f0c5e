/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef RTDETR_CHECKPOINT_HPP_
#define RTDETR_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rtdetr/model.hpp"

namespace rtdetr {

// Binary checkpoint layout, all integers little-endian:
//
//   "RTDK"  u32 version (=1)  u32 tensor_count
//   per tensor: u16 name_len, name bytes, u8 rank, rank x u32 extents,
//               row-major values
//
// Values are IEEE-754 float32, except for the tensor named "__config__",
// which holds the ModelConfig JSON as raw UTF-8 bytes (rank 1, extent =
// byte count). "__config__" is written first.
inline constexpr char kCheckpointMagic[4] = {'R', 'T', 'D', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigTensorName = "__config__";

std::vector<std::uint8_t> encode_checkpoint(const DetectionModel& model);
DetectionModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const DetectionModel& model);
DetectionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rtdetr

#endif  // RTDETR_CHECKPOINT_HPP_
