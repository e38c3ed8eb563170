#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tedi/motion.hpp"

namespace tedi::cli {

// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Raw feature matrices as CSV with a header row f0,f1,...
void write_features_csv(std::ostream& os, const motion::FeatureMatrix& frames);
motion::FeatureMatrix read_features_csv(std::istream& is);

}  // namespace tedi::cli
