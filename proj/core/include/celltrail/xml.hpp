#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace celltrail {

/// Minimal XML DOM for the container's attribute-only schema. Text content
/// other than whitespace is rejected; entities are decoded in attribute
/// values.
struct XmlAttr {
    std::string name;
    std::string value;
};

struct XmlNode {
    std::string name;
    std::vector<XmlAttr> attrs;
    std::vector<XmlNode> children;
    int line = 1;

    const std::string* find_attr(std::string_view attr_name) const {
        for (const auto& a : attrs)
            if (a.name == attr_name) return &a.value;
        return nullptr;
    }
};

/// Parses one document element. `entry` names the archive entry for error
/// reporting; throws ContainerError{MalformedXml} with a 1-based line.
XmlNode parse_xml(std::string_view text, const std::string& entry);

/// Escapes &, <, >, ", and control characters for attribute values.
std::string xml_escape(std::string_view raw);

}  // namespace celltrail
