// Copyright 2026 The URM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "urm/dense.hpp"
#include "urm/ensemble.hpp"
#include "urm/error.hpp"
#include "urm/gating.hpp"
#include "urm/gradcheck.hpp"
#include "urm/harness.hpp"
#include "urm/model.hpp"
#include "urm/optim.hpp"
#include "urm/parallel.hpp"
#include "urm/random.hpp"
#include "urm/record.hpp"
#include "urm/reward_head.hpp"
#include "urm/scoring.hpp"
#include "urm/trainer.hpp"
#include "urm/world.hpp"
