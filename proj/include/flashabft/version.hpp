// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace flashabft {

inline constexpr const char* kToolName = "flashabft";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace flashabft
