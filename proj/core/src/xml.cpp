#include "celltrail/xml.hpp"

#include <cctype>

#include "celltrail/errors.hpp"

namespace celltrail {

namespace {

class Parser {
public:
    Parser(std::string_view text, const std::string& entry) : text_(text), entry_(entry) {}

    XmlNode parse_document() {
        skip_misc();
        XmlNode root = parse_element();
        skip_misc();
        if (pos_ != text_.size()) fail("trailing content after document element");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw ContainerError(ContainerErrc::MalformedXml,
                             entry_ + ":" + std::to_string(line_) + ": " + why, entry_, line_);
    }

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char take() {
        char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) take();
    }

    // Whitespace, <?...?> declarations and <!-- comments -->.
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<?")) {
                while (!eof() && !starts_with("?>")) take();
                if (eof()) fail("unterminated declaration");
                take();
                take();
            } else if (starts_with("<!--")) {
                while (!eof() && !starts_with("-->")) take();
                if (eof()) fail("unterminated comment");
                take();
                take();
                take();
            } else {
                return;
            }
        }
    }

    bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }

    static bool name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' ||
               c == '.';
    }

    std::string parse_name() {
        std::string out;
        while (!eof() && name_char(peek())) out.push_back(take());
        if (out.empty()) fail("expected a name");
        return out;
    }

    std::string parse_attr_value() {
        if (eof() || peek() != '"') fail("expected '\"'");
        take();
        std::string out;
        while (!eof() && peek() != '"') {
            char c = take();
            if (c == '<') fail("'<' in attribute value");
            if (c == '&') {
                out += decode_entity();
            } else {
                out.push_back(c);
            }
        }
        if (eof()) fail("unterminated attribute value");
        take();
        return out;
    }

    std::string decode_entity() {
        std::string name;
        while (!eof() && peek() != ';') {
            name.push_back(take());
            if (name.size() > 8) fail("bad entity");
        }
        if (eof()) fail("unterminated entity");
        take();
        if (name == "amp") return "&";
        if (name == "lt") return "<";
        if (name == "gt") return ">";
        if (name == "quot") return "\"";
        if (name == "apos") return "'";
        if (name.size() > 1 && name[0] == '#') {
            long code = 0;
            if (name[1] == 'x' || name[1] == 'X') {
                for (std::size_t i = 2; i < name.size(); ++i) {
                    char c = name[i];
                    int d = c >= '0' && c <= '9'   ? c - '0'
                            : c >= 'a' && c <= 'f' ? c - 'a' + 10
                            : c >= 'A' && c <= 'F' ? c - 'A' + 10
                                                   : -1;
                    if (d < 0) fail("bad numeric entity");
                    code = code * 16 + d;
                }
            } else {
                for (std::size_t i = 1; i < name.size(); ++i) {
                    if (!std::isdigit(static_cast<unsigned char>(name[i])))
                        fail("bad numeric entity");
                    code = code * 10 + (name[i] - '0');
                }
            }
            // Encode the code point back to UTF-8.
            std::string out;
            if (code < 0x80) {
                out.push_back(static_cast<char>(code));
            } else if (code < 0x800) {
                out.push_back(static_cast<char>(0xC0 | (code >> 6)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
            } else if (code < 0x10000) {
                out.push_back(static_cast<char>(0xE0 | (code >> 12)));
                out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
            } else if (code < 0x110000) {
                out.push_back(static_cast<char>(0xF0 | (code >> 18)));
                out.push_back(static_cast<char>(0x80 | ((code >> 12) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
            } else {
                fail("code point out of range");
            }
            return out;
        }
        fail("unknown entity: &" + name + ";");
    }

    XmlNode parse_element() {
        if (eof() || peek() != '<') fail("expected element");
        XmlNode node;
        node.line = line_;
        take();
        node.name = parse_name();
        for (;;) {
            skip_ws();
            if (eof()) fail("unterminated element");
            if (peek() == '/') {
                take();
                if (eof() || peek() != '>') fail("expected '>'");
                take();
                return node;  // self-closing
            }
            if (peek() == '>') {
                take();
                break;
            }
            XmlAttr attr;
            attr.name = parse_name();
            skip_ws();
            if (eof() || peek() != '=') fail("expected '='");
            take();
            skip_ws();
            attr.value = parse_attr_value();
            node.attrs.push_back(std::move(attr));
        }
        // Children until the matching close tag. Only whitespace text allowed.
        for (;;) {
            skip_misc();
            if (eof()) fail("missing </" + node.name + ">");
            if (peek() != '<') fail("unexpected text content");
            if (starts_with("</")) {
                take();
                take();
                const std::string close = parse_name();
                if (close != node.name)
                    fail("mismatched close tag </" + close + "> for <" + node.name + ">");
                skip_ws();
                if (eof() || peek() != '>') fail("expected '>'");
                take();
                return node;
            }
            node.children.push_back(parse_element());
        }
    }

    std::string_view text_;
    const std::string& entry_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace

XmlNode parse_xml(std::string_view text, const std::string& entry) {
    return Parser(text, entry).parse_document();
}

std::string xml_escape(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    out += "&#" + std::to_string(static_cast<int>(c)) + ";";
                } else {
                    out.push_back(c);
                }
        }
    }
    return out;
}

}  // namespace celltrail
