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

#include <stdexcept>
#include <string>

namespace resfeat {

// Base of every error raised by the library. Each failure class named in the
// public contracts has its own subtype so callers can catch selectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define RESFEAT_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(what) {}         \
    const char* kind() const noexcept override { return #Name; }    \
  };

RESFEAT_DEFINE_ERROR(ShapeMismatch)
RESFEAT_DEFINE_ERROR(InvalidGeometry)
RESFEAT_DEFINE_ERROR(UnsupportedGeometry)
RESFEAT_DEFINE_ERROR(IndexOutOfRange)
RESFEAT_DEFINE_ERROR(InvalidConfig)
RESFEAT_DEFINE_ERROR(MissingTensor)
RESFEAT_DEFINE_ERROR(UnexpectedTensor)
RESFEAT_DEFINE_ERROR(CorruptFile)
RESFEAT_DEFINE_ERROR(MetaMismatch)
RESFEAT_DEFINE_ERROR(DegenerateData)
RESFEAT_DEFINE_ERROR(SingleClassData)
RESFEAT_DEFINE_ERROR(InsufficientClassSamples)
RESFEAT_DEFINE_ERROR(InsufficientSamples)
RESFEAT_DEFINE_ERROR(EmptyClass)
RESFEAT_DEFINE_ERROR(NoClasses)
RESFEAT_DEFINE_ERROR(UnreadableImage)

#undef RESFEAT_DEFINE_ERROR

}  // namespace resfeat
