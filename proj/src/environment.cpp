#include "aida/environment.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace aida {

SandboxOptions SandboxOptions::from_env() {
  SandboxOptions o;
  if (const char* v = std::getenv("AIDA_SANDBOX_TIMEOUT_MS")) {
    o.wall_clock = std::chrono::milliseconds(std::strtoll(v, nullptr, 10));
  }
  if (const char* v = std::getenv("AIDA_SANDBOX_MAX_OUTPUT")) {
    o.max_output = static_cast<std::size_t>(std::strtoull(v, nullptr, 10));
  }
  if (const char* v = std::getenv("AIDA_PYTHON"); v != nullptr && *v != '\0') o.interpreter = v;
  return o;
}

namespace {

struct ScratchDir {
  std::filesystem::path path;
  ScratchDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "aida-sbx-XXXXXX").string();
    if (mkdtemp(tmpl.data()) != nullptr) path = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (!path.empty()) std::filesystem::remove_all(path, ec);
  }
};

[[noreturn]] void child_main(const SandboxOptions& o, const std::filesystem::path& dir, int out_fd,
                             int err_fd) {
  setpgid(0, 0);
  // Best effort: a fresh user+network namespace leaves the script without network access.
  unshare(CLONE_NEWUSER | CLONE_NEWNET);
  dup2(out_fd, STDOUT_FILENO);
  dup2(err_fd, STDERR_FILENO);
  const int devnull = open("/dev/null", O_RDONLY);
  if (devnull >= 0) dup2(devnull, STDIN_FILENO);
  if (chdir(dir.c_str()) != 0) _exit(126);
  const std::string ws = std::filesystem::absolute(o.workspace).string();
  setenv("AIDA_WORKSPACE", ws.c_str(), 1);
  setenv("HOME", dir.c_str(), 1);
  rlimit fsize{static_cast<rlim_t>(64) << 20, static_cast<rlim_t>(64) << 20};
  setrlimit(RLIMIT_FSIZE, &fsize);
  const char* argv[] = {o.interpreter.c_str(), "-I", "script.py", nullptr};
  execvp(argv[0], const_cast<char* const*>(argv));
  _exit(127);
}

}  // namespace

ScriptResult run_script(const std::string& code, const SandboxOptions& options) {
  ScriptResult r;
  ScratchDir dir;
  if (dir.path.empty()) {
    r.launch_failed = true;
    r.stderr_text = "sandbox: cannot create scratch directory";
    return r;
  }
  {
    std::ofstream f(dir.path / "script.py", std::ios::binary);
    f << code;
  }
  int out_pipe[2];
  int err_pipe[2];
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    r.launch_failed = true;
    r.stderr_text = "sandbox: pipe failed";
    return r;
  }
  if (pipe2(err_pipe, O_CLOEXEC) != 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    r.launch_failed = true;
    r.stderr_text = "sandbox: pipe failed";
    return r;
  }
  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
    r.launch_failed = true;
    r.stderr_text = std::string("sandbox: fork failed: ") + std::strerror(errno);
    return r;
  }
  if (pid == 0) child_main(options, dir.path, out_pipe[1], err_pipe[1]);
  close(out_pipe[1]);
  close(err_pipe[1]);

  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + options.wall_clock;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&r.stdout_text, &r.stderr_text};
  int open_fds = 2;
  std::size_t total = 0;
  char buf[8192];
  bool killed = false;
  while (open_fds > 0) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) {
      r.timed_out = true;
      break;
    }
    if (poll(fds, 2, static_cast<int>(std::min<long long>(left, 1000))) < 0 && errno != EINTR) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || fds[i].revents == 0) continue;
      const ssize_t n = read(fds[i].fd, buf, sizeof buf);
      if (n <= 0) {
        close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
        continue;
      }
      const std::size_t room = options.max_output > total ? options.max_output - total : 0;
      const std::size_t take = std::min(room, static_cast<std::size_t>(n));
      sinks[i]->append(buf, take);
      total += take;
      if (take < static_cast<std::size_t>(n)) r.truncated = true;
    }
    if (r.truncated) break;
  }
  if (r.timed_out || r.truncated) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
    killed = true;
  }
  for (auto& f : fds) {
    if (f.fd >= 0) close(f.fd);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) {
    r.exit_code = WEXITSTATUS(status);
    if (r.exit_code == 127) {
      r.launch_failed = true;
      r.stderr_text += "sandbox: cannot execute " + options.interpreter + "\n";
    }
  } else {
    r.exit_code = -1;
  }
  if (r.timed_out) r.stderr_text += "sandbox: wall-clock limit exceeded\n";
  if (r.truncated) r.stderr_text += "sandbox: output limit exceeded\n";
  r.exit_ok = !killed && !r.launch_failed && WIFEXITED(status) && r.exit_code == 0;
  return r;
}

std::string Observation::body_text() const {
  if (package) return aida::to_json(*package).dump();
  if (script) {
    std::string out = std::string("exit_ok: ") + (script->exit_ok ? "true" : "false") + "\n";
    out += "stdout:\n" + script->stdout_text;
    if (!script->stderr_text.empty()) out += "\nstderr:\n" + script->stderr_text;
    return out;
  }
  return {};
}

ordered_json to_json(const Observation& o) {
  ordered_json j = {{"tool", to_string(o.tool)}, {"status", to_string(o.status)}};
  ordered_json v = ordered_json::array();
  for (const auto& x : o.violations) v.push_back({{"kind", to_string(x.kind)}, {"detail", x.detail}});
  j["violations"] = v;
  j["schema_error"] = o.schema_error;
  if (o.package) j["package"] = to_json(*o.package);
  if (o.script) {
    j["script"] = {{"stdout", o.script->stdout_text},
                   {"stderr", o.script->stderr_text},
                   {"exit_ok", o.script->exit_ok},
                   {"exit_code", o.script->exit_code},
                   {"timed_out", o.script->timed_out},
                   {"truncated", o.script->truncated}};
  }
  return j;
}

Observation observation_from_json(const ordered_json& j) {
  Observation o;
  o.tool = j.at("tool").get<std::string>() == "python" ? Tool::python : Tool::dsl2data;
  const auto status = j.at("status").get<std::string>();
  o.status = status == "Success" ? ExecStatus::Success
             : status == "Timeout" ? ExecStatus::Timeout
                                   : ExecStatus::Error;
  for (const auto& v : j.at("violations")) {
    o.violations.push_back({violation_kind_from_string(v.at("kind").get<std::string>())
                                .value_or(Violation::Kind::unknown_metric),
                            v.at("detail").get<std::string>()});
  }
  o.schema_error = j.value("schema_error", false);
  if (j.contains("package")) {
    const auto& p = j["package"];
    FeedbackPackage pkg;
    pkg.status = o.status;
    const auto& cal = p.at("calibration_report");
    try {
      pkg.calibration_report.corrected_dsl = parse_query(cal.at("corrected_dsl"));
    } catch (const Error&) {
      // a rejected request has no usable corrected form
    }
    for (const auto& n : cal.at("notices")) pkg.calibration_report.notices.push_back(n.get<std::string>());
    pkg.calibration_report.violations = o.violations;
    const auto& res = p.at("execution_results");
    if (res.contains("data_path")) pkg.execution_results.data_path = res["data_path"].get<std::string>();
    for (const auto& row : res.at("preview")) pkg.execution_results.preview.push_back(row);
    pkg.execution_results.row_count = res.value("row_count", std::int64_t{0});
    pkg.message = p.value("message", std::string());
    o.package = std::move(pkg);
  }
  if (j.contains("script")) {
    const auto& s = j["script"];
    ScriptResult r;
    r.stdout_text = s.at("stdout").get<std::string>();
    r.stderr_text = s.at("stderr").get<std::string>();
    r.exit_ok = s.at("exit_ok").get<bool>();
    r.exit_code = s.at("exit_code").get<int>();
    r.timed_out = s.at("timed_out").get<bool>();
    r.truncated = s.at("truncated").get<bool>();
    o.script = std::move(r);
  }
  return o;
}

Observation Environment::execute_action(const ToolCall& call) {
  Observation o;
  o.tool = call.tool;
  try {
    if (!call.schema_ok) {
      o.status = ExecStatus::Error;
      o.schema_error = true;
      if (call.tool == Tool::python) {
        ScriptResult r;
        r.stderr_text = call.diagnostic;
        o.script = r;
      } else {
        FeedbackPackage pkg;
        pkg.status = ExecStatus::Error;
        pkg.schema_error = true;
        pkg.message = call.diagnostic;
        o.package = pkg;
      }
      return o;
    }
    if (call.tool == Tool::dsl2data) {
      FeedbackPackage pkg = engine_.run(parse_query(call.arguments));
      o.status = pkg.status;
      o.violations = pkg.calibration_report.violations;
      o.package = std::move(pkg);
    } else {
      ScriptResult r = run_script(call.arguments.at("code").get<std::string>(), sandbox_);
      o.status = r.timed_out ? ExecStatus::Timeout : r.exit_ok ? ExecStatus::Success : ExecStatus::Error;
      o.script = std::move(r);
    }
  } catch (const std::exception& e) {
    o.status = ExecStatus::Error;
    ScriptResult r;
    r.stderr_text = e.what();
    if (call.tool == Tool::python) o.script = r;
    else {
      FeedbackPackage pkg;
      pkg.status = ExecStatus::Error;
      pkg.message = e.what();
      o.package = pkg;
    }
  }
  return o;
}

}  // namespace aida
