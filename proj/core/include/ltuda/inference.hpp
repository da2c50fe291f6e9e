/**
 * Copyright 2026 The ltuda Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "ltuda/grid.hpp"

namespace ltuda {

/// Linear threshold classifier: argmax_c p_c when max_c p_c >= tau, else
/// background. Ties go to the lowest class index.
HardLabelMap threshold_classify(const ForegroundProbMaps& probs, double tau);

/// Single-pixel form; `probs` holds p_1..p_C.
int threshold_pixel(std::span<const double> probs, double tau);

}  // namespace ltuda
