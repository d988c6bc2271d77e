#pragma once

#include <filesystem>
#include <string>

#include "nnfdet/boost.hpp"
#include "nnfdet/featpool.hpp"

namespace nnfdet {

inline constexpr int kPoolFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;

std::string serialize_pool(const FeaturePool& pool);
FeaturePool deserialize_pool(const std::string& text);
void save_pool(const std::filesystem::path& path, const FeaturePool& pool);
FeaturePool load_pool(const std::filesystem::path& path);

/// Model files reject unknown versions with FormatError.
std::string serialize_model(const BoostedModel& model);
BoostedModel deserialize_model(const std::string& text);
void save_model(const std::filesystem::path& path, const BoostedModel& model);
BoostedModel load_model(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace nnfdet
