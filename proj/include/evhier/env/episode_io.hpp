#pragma once

#include "evhier/env/scripted_env.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace evhier::env {

// Episode file: JSON-lines, one episode per line with fields
//   id, scene{table_height, object_start, goal_pos, hand_start, episode_type, seed
//             [, stretch_command]},
//   observations (T x 11), actions (T x 4), phase_labels (T), [attention (T x 3)]
nlohmann::json episode_to_json(const Episode& ep);
Episode episode_from_json(const nlohmann::json& j);

void write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& path);

/// Row-per-step nested array <-> column-per-step matrix.
nlohmann::json matrix_to_rows(const Matrix& m);
Matrix rows_to_matrix(const nlohmann::json& rows, Index width);

}  // namespace evhier::env
