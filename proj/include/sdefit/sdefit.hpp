/*
 * Copyright 2026 The sdefit Authors
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
#ifndef SDEFIT_SDEFIT_HPP
#define SDEFIT_SDEFIT_HPP

#include "sdefit/core.hpp"
#include "sdefit/covid.hpp"
#include "sdefit/estimators.hpp"
#include "sdefit/experiments.hpp"
#include "sdefit/models.hpp"
#include "sdefit/moments.hpp"
#include "sdefit/optimize.hpp"
#include "sdefit/rng.hpp"
#include "sdefit/sim.hpp"
#include "sdefit/ukf.hpp"

#endif  // SDEFIT_SDEFIT_HPP
