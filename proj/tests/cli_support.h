// Copyright 2026 The alignsift Authors.
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

// Runs the command-line tool as a subprocess.

#ifndef ALIGNSIFT_TESTS_CLI_SUPPORT_H_
#define ALIGNSIFT_TESTS_CLI_SUPPORT_H_

#include <stdio.h>
#include <sys/wait.h>

#include <filesystem>
#include <string>

namespace alignsift::testing {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string ShellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

// Runs `alignsift <args>` in `cwd`; `env` is prepended verbatim
// (e.g. "FOO=1 ").
inline CliResult RunCli(const std::filesystem::path& cwd, const std::string& args,
                        const std::string& env = "") {
  const std::string command = "cd " + ShellQuote(cwd.string()) + " && " + env +
                              ShellQuote(ALIGNSIFT_CLI) + " " + args + " 2>&1";
  CliResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return result;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace alignsift::testing

#endif  // ALIGNSIFT_TESTS_CLI_SUPPORT_H_
