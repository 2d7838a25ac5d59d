#include <httplib.h>

#include "aida/reward.hpp"

namespace aida {

RemoteJudge::RemoteJudge(std::string endpoint, std::string model, int timeout_s)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), timeout_s_(timeout_s) {}

JudgeVerdict RemoteJudge::parse_completion(const std::string& content) {
  const auto at = content.rfind("Final Answer:");
  if (at == std::string::npos) {
    throw Error(ErrorKind::parse, "judge", "judge reply lacks a 'Final Answer:' line");
  }
  std::string answer = content.substr(at + 13);
  answer.erase(0, answer.find_first_not_of(" \t\r\n\"[*"));
  if (answer.rfind("Invalid", 0) == 0) return {false, content};
  if (answer.rfind("Valid", 0) == 0) return {true, content};
  throw Error(ErrorKind::parse, "judge", "judge reply has no Valid/Invalid verdict");
}

JudgeVerdict RemoteJudge::judge(const JudgeRequest& request) {
  const auto scheme_end = endpoint_.find("://");
  const auto path_start = endpoint_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base = endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  httplib::Client client(base);
  client.set_connection_timeout(timeout_s_);
  client.set_read_timeout(timeout_s_);
  const nlohmann::json body = {
      {"model", model_},
      {"temperature", 0},
      {"messages", {{{"role", "user"}, {"content", render_prompt(request)}}}}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::io, endpoint_, "judge request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::io, endpoint_, "judge returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto reply = nlohmann::json::parse(res->body);
    return parse_completion(reply.at("choices").at(0).at("message").at("content").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, endpoint_, std::string("malformed judge reply: ") + e.what());
  }
}

}  // namespace aida
