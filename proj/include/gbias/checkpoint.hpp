#ifndef GBIAS_CHECKPOINT_HPP
#define GBIAS_CHECKPOINT_HPP

#include <string>

#include "gbias/config_json.hpp"
#include "gbias/lstm_lm.hpp"

namespace gbias {

/// Binary checkpoint layout:
///   8 bytes   magic "GBIASLM1"
///   8 bytes   little-endian u64 header length N
///   N bytes   JSON header: config, vocabulary, vocab_hash, metadata and the
///             ordered tensor list [{name, rows, cols}]
///   payload   every tensor's entries as little-endian IEEE-754 doubles,
///             column-major, in header order
void save_checkpoint(const LanguageModel& model, const std::string& path, const Json& metadata = Json::object());

/// Validates magic, header and every tensor shape against the stored
/// config; ErrorCode::Parse on any mismatch or truncation.
LanguageModel load_checkpoint(const std::string& path, Json* metadata = nullptr);

}  // namespace gbias

#endif  // GBIAS_CHECKPOINT_HPP
