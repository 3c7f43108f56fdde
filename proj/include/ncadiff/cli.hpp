/*
 * Copyright 2026 The ncadiff Authors
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

#include <ostream>
#include <string>
#include <vector>

#include "ncadiff/config.hpp"

namespace ncadiff {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitVerification = 3 };

/// Entry point of the ncadiff binary; args excludes the program name.
///
///   ncadiff train     [--config FILE] [--KEY VALUE ...]
///   ncadiff infer     --checkpoint FILE --image PNG --out DIR [--mask PNG] [--KEY VALUE ...]
///   ncadiff eval      --checkpoint FILE [--split NAME] [--out CSV] [--KEY VALUE ...]
///   ncadiff params    [--config FILE] [--KEY VALUE ...]
///   ncadiff gradcheck [--config FILE] [--KEY VALUE ...]
///   ncadiff frames    --checkpoint FILE --image PNG --out DIR [--mask PNG] [--KEY VALUE ...]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Text printed by the params command.
std::string params_report(const RunConfig& config);

/// "--key value" / "--key=value" pairs; throws ConfigError on a dangling key or
/// a bare positional argument.
ConfigOverrides parse_overrides(const std::vector<std::string>& args);

}  // namespace ncadiff
