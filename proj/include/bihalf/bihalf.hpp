/*
 * Copyright 2026 The bihalf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "bihalf/common.hpp"
#include "bihalf/data.hpp"
#include "bihalf/gradcheck.hpp"
#include "bihalf/layers.hpp"
#include "bihalf/metrics.hpp"
#include "bihalf/model.hpp"
#include "bihalf/ops.hpp"
#include "bihalf/optim.hpp"
#include "bihalf/prune.hpp"
#include "bihalf/quantize.hpp"
#include "bihalf/rng.hpp"
#include "bihalf/tensor.hpp"
#include "bihalf/toy.hpp"
#include "bihalf/train.hpp"
#include "bihalf/transport.hpp"
