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

#include <vector>

#include "ltuda/backbone.hpp"
#include "ltuda/labels.hpp"

namespace ltuda {

/// What to do with a known-negative pixel the teacher assigns to the
/// annotated class.
enum class ConflictRule { kNextBest, kBackground };

/// Thresholded teacher prediction with annotated organ pixels replaced by
/// the partial ground truth.
HardLabelMap make_masked_pseudo(const ForegroundProbMaps& teacher_probs, const PartialLabelMap& partial, double tau,
                                ConflictRule rule = ConflictRule::kNextBest);

/// Runs the teacher in eval mode on a weak batch and returns per-sample
/// masked pseudo-labels. The teacher is only read; no gradients are formed.
std::vector<HardLabelMap> teacher_step(UNet<float>& teacher, const std::vector<SampleRecord>& weak_batch, double tau,
                                       ConflictRule rule = ConflictRule::kNextBest);

}  // namespace ltuda
