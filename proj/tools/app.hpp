/* Copyright 2026 The GuidedMix Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace guidedmix::app {

enum ExitCode { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

// Parses `args` (program name excluded) and runs the selected command.
int dispatch(const std::vector<std::string>& args);

// Output root: $GUIDEDMIX_RUN_DIR when set, otherwise ./runs.
std::filesystem::path run_root();
// Creates a new, unused directory <root>/<command>-<timestamp>[-k].
std::filesystem::path fresh_run_dir(const std::string& command);

}  // namespace guidedmix::app
