/*
 * Copyright 2026 The resfeat Authors
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

#include "resfeat/dataset.hpp"
#include "resfeat/error.hpp"
#include "resfeat/features.hpp"
#include "resfeat/image.hpp"
#include "resfeat/nn_ops.hpp"
#include "resfeat/pca.hpp"
#include "resfeat/pipeline.hpp"
#include "resfeat/random.hpp"
#include "resfeat/resnet.hpp"
#include "resfeat/rft1.hpp"
#include "resfeat/scnn.hpp"
#include "resfeat/svm.hpp"
#include "resfeat/tensor.hpp"
