#include "evhier/env/episode_io.hpp"

#include <fstream>
#include <string>

namespace evhier::env {

using nlohmann::json;

namespace {

json vec3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 read_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("episode: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

json matrix_to_rows(const Matrix& m) {
  json rows = json::array();
  for (Index t = 0; t < m.cols(); ++t) {
    json row = json::array();
    for (Index i = 0; i < m.rows(); ++i) row.push_back(m(i, t));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix rows_to_matrix(const json& rows, Index width) {
  if (!rows.is_array()) throw InputError("episode: expected an array of rows");
  Matrix m(width, static_cast<Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& row = rows[t];
    if (!row.is_array() || static_cast<Index>(row.size()) != width) {
      throw InputError("episode: row " + std::to_string(t) + " must have " + std::to_string(width) + " entries");
    }
    for (Index i = 0; i < width; ++i) m(i, static_cast<Index>(t)) = row[static_cast<std::size_t>(i)].get<double>();
  }
  return m;
}

json episode_to_json(const Episode& ep) {
  json scene = {
      {"table_height", ep.scene.table_height},
      {"object_start", vec3(ep.scene.object_start)},
      {"goal_pos", vec3(ep.scene.goal_pos)},
      {"hand_start", vec3(ep.scene.hand_start)},
      {"episode_type", std::string(to_string(ep.scene.episode_type))},
      {"seed", ep.scene.seed},
  };
  if (ep.scene.stretch_command) scene["stretch_command"] = *ep.scene.stretch_command;
  json j = {
      {"id", ep.id},
      {"scene", std::move(scene)},
      {"observations", matrix_to_rows(ep.observations)},
      {"actions", matrix_to_rows(ep.actions)},
      {"phase_labels", ep.phase_labels},
  };
  if (ep.attention) j["attention"] = matrix_to_rows(*ep.attention);
  return j;
}

Episode episode_from_json(const json& j) {
  try {
    Episode ep;
    ep.id = j.at("id").get<std::uint64_t>();
    const auto& s = j.at("scene");
    ep.scene.table_height = s.at("table_height").get<double>();
    ep.scene.object_start = read_vec3(s.at("object_start"));
    ep.scene.goal_pos = read_vec3(s.at("goal_pos"));
    ep.scene.hand_start = read_vec3(s.at("hand_start"));
    ep.scene.episode_type = episode_type_from_string(s.at("episode_type").get<std::string>());
    ep.scene.seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("stretch_command")) ep.scene.stretch_command = s.at("stretch_command").get<std::array<double, 4>>();
    ep.observations = rows_to_matrix(j.at("observations"), kObsDim);
    ep.actions = rows_to_matrix(j.at("actions"), kActDim);
    ep.phase_labels = j.at("phase_labels").get<std::vector<int>>();
    if (j.contains("attention")) ep.attention = rows_to_matrix(j.at("attention"), kFocusDim);
    const Index T = ep.observations.cols();
    if (ep.actions.cols() != T || static_cast<Index>(ep.phase_labels.size()) != T ||
        (ep.attention && ep.attention->cols() != T)) {
      throw InputError("episode " + std::to_string(ep.id) + ": sequence lengths differ");
    }
    return ep;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed episode record: ") + e.what());
  }
}

void write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot open episode file for writing: " + path.string());
  for (const auto& ep : episodes) os << episode_to_json(ep).dump() << '\n';
  if (!os) throw InputError("failed writing episode file: " + path.string());
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open episode file: " + path.string());
  std::vector<Episode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(episode_from_json(j));
  }
  return out;
}

}  // namespace evhier::env
