// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flashabft/attention.hpp"
#include "flashabft/campaign.hpp"
#include "flashabft/checker.hpp"
#include "flashabft/digest.hpp"
#include "flashabft/engine.hpp"
#include "flashabft/faults.hpp"
#include "flashabft/matrix.hpp"
#include "flashabft/numerics.hpp"
#include "flashabft/registers.hpp"
#include "flashabft/rng.hpp"
#include "flashabft/version.hpp"
