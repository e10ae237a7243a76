// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kronlora/adapters.hpp"

namespace kronlora {

// Layout (all integers little-endian u32, floats little-endian IEEE-754 binary64):
//   "KLORAv01" | kind:u8 | a1 a2 b1 b2 r d_in d_out | alpha dropout_p | tensor_count
//   then per tensor: name_len | name bytes | rows | cols | rows*cols row-major values
inline constexpr std::array<char, 8> kCheckpointMagic = {'K', 'L', 'O', 'R', 'A', 'v', '0', '1'};
inline constexpr std::size_t kCheckpointHeaderBytes = 8 + 1 + 7 * 4 + 2 * 8 + 4;

/// Exact file size for an adapter with this plan.
std::size_t checkpoint_size(const AdapterPlan& plan);

std::vector<std::uint8_t> encode_checkpoint(const Adapter& adapter);
/// Throws FormatError (magic / kind) or CorruptionError (inconsistent or truncated data).
Adapter decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Returns the number of bytes written.
std::size_t save_checkpoint(const Adapter& adapter, const std::filesystem::path& path);
Adapter load_checkpoint(const std::filesystem::path& path);

} // namespace kronlora
