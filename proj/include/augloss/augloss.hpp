// Copyright 2026 The AugLoss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "augloss/augment.hpp"
#include "augloss/corruption.hpp"
#include "augloss/data_io.hpp"
#include "augloss/error.hpp"
#include "augloss/evaluation.hpp"
#include "augloss/experiment.hpp"
#include "augloss/image.hpp"
#include "augloss/label_noise.hpp"
#include "augloss/loss.hpp"
#include "augloss/model.hpp"
#include "augloss/random.hpp"
#include "augloss/trainer.hpp"
