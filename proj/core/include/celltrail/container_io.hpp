#pragma once

#include <string>
#include <vector>

#include "celltrail/document.hpp"

namespace celltrail {

/// Loaded document plus non-fatal findings (unknown attributes, audit-chain
/// violations).
struct LoadResult {
    Document document;
    std::vector<std::string> warnings;
};

/// Reads a .ttz container: a zip archive holding meta.xml, content.xml and
/// changes.xml. Unknown XML attributes are ignored with a warning; a broken
/// change chain is reported as a warning, not an error.
LoadResult load_document(std::string_view bytes);

/// Writes the canonical archive. Deterministic: identical documents always
/// produce byte-identical output (fixed entry order, fixed attribute order,
/// shortest round-tripping number rendering).
std::string save_document(const Document& doc);

}  // namespace celltrail
