// Copyright 2026 The lossypir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "lossypir/bytes.hpp"
#include "lossypir/config.hpp"
#include "lossypir/core.hpp"
#include "lossypir/dataset_io.hpp"
#include "lossypir/error.hpp"
#include "lossypir/leakage.hpp"
#include "lossypir/protocol.hpp"
#include "lossypir/quantizer.hpp"
#include "lossypir/rdl.hpp"
#include "lossypir/schemes.hpp"
