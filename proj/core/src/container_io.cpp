#include "celltrail/container_io.hpp"

#include <algorithm>
#include <sstream>

#include "celltrail/xml.hpp"
#include "celltrail/zip.hpp"

namespace celltrail {

namespace {

constexpr const char* kMetaEntry = "meta.xml";
constexpr const char* kContentEntry = "content.xml";
constexpr const char* kChangesEntry = "changes.xml";
constexpr const char* kXmlDecl = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";

// ---------------------------------------------------------------------------
// save
// ---------------------------------------------------------------------------

void check_record_invariants(const Document& doc) {
    const auto& changes = doc.changes();
    for (std::size_t i = 0; i < changes.size(); ++i) {
        const auto& r = changes[i];
        if (r.id != static_cast<std::int64_t>(i) + 1)
            throw ContainerError(ContainerErrc::InvariantViolation,
                                 "record ids must be gapless ascending from 1");
        if (i > 0 && r.timestamp < changes[i - 1].timestamp)
            throw ContainerError(ContainerErrc::InvariantViolation,
                                 "record timestamps must be non-decreasing");
        if (is_content_change(r.kind)) {
            if (!r.target)
                throw ContainerError(ContainerErrc::InvariantViolation,
                                     "content change without target");
            if (content_equal(r.previous, r.next))
                throw ContainerError(ContainerErrc::InvariantViolation,
                                     "content change with previous == new (record " +
                                         std::to_string(r.id) + ")");
        }
        for (const CellContent* c : {&r.previous, &r.next})
            if (const auto why = content_violation(*c))
                throw ContainerError(ContainerErrc::InvariantViolation,
                                     *why + " (record " + std::to_string(r.id) + ")");
    }
}

void check_cell_invariants(const Document& doc) {
    for (const auto& s : doc.sheets()) {
        for (const auto& [pos, cell] : s.cells) {
            if (const auto why = content_violation(cell.content))
                throw ContainerError(ContainerErrc::InvariantViolation,
                                     *why + " (cell " + render_address(grid_addr(pos)) + ")");
            if (cell.cached_value) {
                if (is_text(cell.content) || is_empty(cell.content))
                    throw ContainerError(ContainerErrc::InvariantViolation,
                                         "cached value on non-evaluable cell " +
                                             render_address(grid_addr(pos)));
                if (is_number(cell.content) &&
                    !bits_equal(*cell.cached_value, std::get<double>(cell.content)))
                    throw ContainerError(ContainerErrc::InvariantViolation,
                                         "number cell cache disagrees with its value at " +
                                             render_address(grid_addr(pos)));
            }
        }
    }
}

std::string render_meta(const Document& doc) {
    std::string xml = kXmlDecl;
    xml += "<meta creator=\"" + xml_escape(doc.meta().creator) + "\" created=\"" +
           render_timestamp(doc.meta().created) + "\"/>\n";
    return xml;
}

void append_content_attrs(std::string& xml, const CellContent& content) {
    if (is_number(content)) {
        xml += " number=\"" + render_number(std::get<double>(content)) + "\"";
    } else if (is_text(content)) {
        xml += " text=\"" + xml_escape(std::get<std::string>(content)) + "\"";
    } else if (is_formula(content)) {
        xml += " formula=\"" + xml_escape(std::get<FormulaSource>(content).text) + "\"";
    }
}

std::string render_content_xml(const Document& doc) {
    std::string xml = kXmlDecl;
    xml += "<document>\n";
    for (const auto& s : doc.sheets()) {
        xml += "  <sheet name=\"" + xml_escape(s.name) + "\">\n";
        for (const auto& [pos, cell] : s.cells) {
            xml += "    <cell addr=\"" + render_address(grid_addr(pos)) + "\"";
            append_content_attrs(xml, cell.content);
            if (is_formula(cell.content) && cell.cached_value)
                xml += " value=\"" + render_number(*cell.cached_value) + "\"";
            xml += "/>\n";
        }
        xml += "  </sheet>\n";
    }
    xml += "</document>\n";
    return xml;
}

std::string qualified_addr(const Document& doc, const std::string& sheet,
                           const std::string& addr_text) {
    if (sheet == doc.sheets().front().name) return addr_text;
    return sheet + "." + addr_text;
}

// previous/new child element. The cached value rides along only for formula
// content (a number is its own cache, text and empty have none).
void append_side(std::string& xml, const char* tag, const CellContent& content,
                 const std::optional<double>& cached) {
    xml += "      <";
    xml += tag;
    append_content_attrs(xml, content);
    if (is_formula(content) && cached) xml += " value=\"" + render_number(*cached) + "\"";
    xml += "/>\n";
}

std::string render_changes_xml(const Document& doc) {
    std::string xml = kXmlDecl;
    xml += "<changes>\n";
    for (const auto& r : doc.changes()) {
        xml += "  <change id=\"" + std::to_string(r.id) + "\" author=\"" +
               xml_escape(r.author) + "\" date=\"" + render_timestamp(r.timestamp) + "\"";
        bool with_body = false;
        if (is_content_change(r.kind)) {
            xml += " kind=\"content\" addr=\"" +
                   qualified_addr(doc, r.sheet, render_address(*r.target)) + "\"";
            with_body = true;
        } else if (const auto* mv = std::get_if<MoveKind>(&r.kind)) {
            xml += " kind=\"move\" from=\"" + qualified_addr(doc, r.sheet, render_address(mv->from)) +
                   "\" to=\"" + qualified_addr(doc, r.sheet, render_address(mv->to)) + "\"";
            with_body = true;
        } else if (const auto* bm = std::get_if<BlockMoveKind>(&r.kind)) {
            xml += " kind=\"move\" from=\"" + qualified_addr(doc, r.sheet, render_range(bm->from)) +
                   "\" to=\"" + qualified_addr(doc, r.sheet, render_range(bm->to)) + "\"";
        } else {
            const char* kind_name = nullptr;
            int index = 0;
            if (const auto* k = std::get_if<RowInsertKind>(&r.kind)) {
                kind_name = "row-insert";
                index = k->index;
            } else if (const auto* k2 = std::get_if<RowDeleteKind>(&r.kind)) {
                kind_name = "row-delete";
                index = k2->index;
            } else if (const auto* k3 = std::get_if<ColInsertKind>(&r.kind)) {
                kind_name = "col-insert";
                index = k3->index;
            } else {
                kind_name = "col-delete";
                index = std::get<ColDeleteKind>(r.kind).index;
            }
            xml += " kind=\"";
            xml += kind_name;
            xml += "\" index=\"" + std::to_string(index) + "\"";
            if (r.sheet != doc.sheets().front().name)
                xml += " sheet=\"" + xml_escape(r.sheet) + "\"";
        }
        if (with_body) {
            xml += ">\n";
            append_side(xml, "previous", r.previous, r.prev_cached_value);
            append_side(xml, "new", r.next, std::nullopt);
            xml += "    </change>\n";
        } else {
            xml += "/>\n";
        }
    }
    xml += "</changes>\n";
    return xml;
}

// ---------------------------------------------------------------------------
// load
// ---------------------------------------------------------------------------

struct Loader {
    std::vector<std::string> warnings;

    void warn_unknown_attrs(const XmlNode& node, const std::string& entry,
                            std::initializer_list<const char*> known) {
        for (const auto& a : node.attrs) {
            bool ok = false;
            for (const char* k : known)
                if (a.name == k) ok = true;
            if (!ok)
                warnings.push_back(entry + ":" + std::to_string(node.line) +
                                   ": ignoring unknown attribute '" + a.name + "' on <" +
                                   node.name + ">");
        }
    }

    [[noreturn]] static void malformed(const std::string& entry, const XmlNode& node,
                                       const std::string& why) {
        throw ContainerError(ContainerErrc::MalformedXml,
                             entry + ":" + std::to_string(node.line) + ": " + why, entry,
                             node.line);
    }

    DocumentMeta load_meta(const std::string& text) {
        const XmlNode root = parse_xml(text, kMetaEntry);
        if (root.name != "meta") malformed(kMetaEntry, root, "expected <meta> root");
        warn_unknown_attrs(root, kMetaEntry, {"creator", "created"});
        const std::string* creator = root.find_attr("creator");
        const std::string* created = root.find_attr("created");
        if (!creator || !created)
            malformed(kMetaEntry, root, "<meta> requires creator and created");
        const auto ts = parse_timestamp(*created);
        if (!ts) malformed(kMetaEntry, root, "bad created timestamp: " + *created);
        return DocumentMeta{*creator, *ts};
    }

    CellContent parse_cell_content(const XmlNode& node, const std::string& entry,
                                   bool required) {
        const std::string* formula = node.find_attr("formula");
        const std::string* number = node.find_attr("number");
        const std::string* text = node.find_attr("text");
        const int present = (formula != nullptr) + (number != nullptr) + (text != nullptr);
        if (present > 1)
            malformed(entry, node, "cell content must be exactly one of formula|number|text");
        if (present == 0) {
            if (required) malformed(entry, node, "cell without content");
            return empty_content();
        }
        if (number) {
            const auto v = parse_number(*number);
            if (!v) malformed(entry, node, "bad number: " + *number);
            return number_content(*v);
        }
        if (text) return text_content(*text);
        if (formula->size() < 2 || (*formula)[0] != '=')
            malformed(entry, node, "formula must begin with '=': " + *formula);
        return formula_content(*formula);
    }

    std::vector<SheetData> load_content(const std::string& text) {
        const XmlNode root = parse_xml(text, kContentEntry);
        if (root.name != "document") malformed(kContentEntry, root, "expected <document> root");
        warn_unknown_attrs(root, kContentEntry, {});
        std::vector<SheetData> sheets;
        for (const auto& sheet_node : root.children) {
            if (sheet_node.name != "sheet")
                malformed(kContentEntry, sheet_node, "expected <sheet>");
            warn_unknown_attrs(sheet_node, kContentEntry, {"name"});
            const std::string* name = sheet_node.find_attr("name");
            if (!name || name->empty())
                malformed(kContentEntry, sheet_node, "<sheet> requires a non-empty name");
            SheetData sheet;
            sheet.name = *name;
            for (const auto& cell_node : sheet_node.children) {
                if (cell_node.name != "cell")
                    malformed(kContentEntry, cell_node, "expected <cell>");
                warn_unknown_attrs(cell_node, kContentEntry,
                                   {"addr", "formula", "number", "text", "value"});
                const std::string* addr_text = cell_node.find_attr("addr");
                if (!addr_text) malformed(kContentEntry, cell_node, "cell without addr");
                const auto addr = parse_address(*addr_text);
                if (!addr) malformed(kContentEntry, cell_node, "bad address: " + *addr_text);
                CellContent content = parse_cell_content(cell_node, kContentEntry, true);
                const std::string* value = cell_node.find_attr("value");
                if (value && !is_formula(content))
                    malformed(kContentEntry, cell_node,
                              "cached value is only valid on formula cells");
                Cell cell;
                cell.cached_value = default_cache(content);
                if (value) {
                    const auto v = parse_number(*value);
                    if (!v) malformed(kContentEntry, cell_node, "bad cached value: " + *value);
                    cell.cached_value = *v;
                }
                cell.content = std::move(content);
                const GridPos pos = grid_pos(addr->plain());
                if (!sheet.cells.emplace(pos, std::move(cell)).second)
                    malformed(kContentEntry, cell_node, "duplicate cell " + *addr_text);
            }
            sheets.push_back(std::move(sheet));
        }
        if (sheets.empty()) malformed(kContentEntry, root, "document has no sheets");
        return sheets;
    }

    [[noreturn]] static void invalid(std::int64_t id, const std::string& why) {
        throw ContainerError(ContainerErrc::InvalidRecord,
                             "record " + std::to_string(id) + ": " + why, kChangesEntry, 0, id);
    }

    // "A1" or "Sheet.A1" -> (sheet name or empty, address part)
    static std::pair<std::string, std::string> split_sheet(const std::string& text) {
        const auto dot = text.find('.');
        if (dot == std::string::npos) return {"", text};
        return {text.substr(0, dot), text.substr(dot + 1)};
    }

    std::vector<ChangeRecord> load_changes(const std::string& text,
                                           const std::vector<SheetData>& sheets) {
        const XmlNode root = parse_xml(text, kChangesEntry);
        if (root.name != "changes") malformed(kChangesEntry, root, "expected <changes> root");
        warn_unknown_attrs(root, kChangesEntry, {});
        std::vector<ChangeRecord> records;

        auto resolve_sheet = [&](const std::string& name, std::int64_t id) -> std::string {
            if (name.empty()) return sheets.front().name;
            for (const auto& s : sheets)
                if (s.name == name) return name;
            invalid(id, "unknown sheet: " + name);
        };

        for (const auto& node : root.children) {
            if (node.name != "change") malformed(kChangesEntry, node, "expected <change>");
            warn_unknown_attrs(node, kChangesEntry,
                               {"id", "author", "date", "kind", "addr", "index", "from", "to",
                                "sheet"});
            const std::string* id_text = node.find_attr("id");
            const std::string* author = node.find_attr("author");
            const std::string* date = node.find_attr("date");
            const std::string* kind = node.find_attr("kind");
            if (!id_text || !author || !date || !kind)
                malformed(kChangesEntry, node, "<change> requires id, author, date, kind");
            std::int64_t id = 0;
            try {
                std::size_t used = 0;
                id = std::stoll(*id_text, &used);
                if (used != id_text->size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                malformed(kChangesEntry, node, "bad record id: " + *id_text);
            }
            const std::int64_t expected = static_cast<std::int64_t>(records.size()) + 1;
            if (id != expected)
                invalid(id, id > expected ? "gap in id sequence" : "id out of order");

            ChangeRecord rec;
            rec.id = id;
            rec.author = *author;
            const auto ts = parse_timestamp(*date);
            if (!ts) malformed(kChangesEntry, node, "bad date: " + *date);
            rec.timestamp = *ts;
            if (!records.empty() && rec.timestamp < records.back().timestamp)
                invalid(id, "timestamp regression");

            auto load_body = [&](bool want_cached) {
                const XmlNode* prev_node = nullptr;
                const XmlNode* new_node = nullptr;
                for (const auto& child : node.children) {
                    if (child.name == "previous" && !prev_node)
                        prev_node = &child;
                    else if (child.name == "new" && !new_node)
                        new_node = &child;
                    else
                        malformed(kChangesEntry, child, "unexpected <" + child.name + ">");
                }
                if (!prev_node || !new_node)
                    malformed(kChangesEntry, node, "change requires <previous> and <new>");
                warn_unknown_attrs(*prev_node, kChangesEntry,
                                   {"formula", "number", "text", "value"});
                warn_unknown_attrs(*new_node, kChangesEntry, {"formula", "number", "text"});
                rec.previous = parse_cell_content(*prev_node, kChangesEntry, false);
                rec.next = parse_cell_content(*new_node, kChangesEntry, false);
                if (is_number(rec.previous)) rec.prev_cached_value = std::get<double>(rec.previous);
                if (const std::string* v = prev_node->find_attr("value")) {
                    if (!is_formula(rec.previous) || !want_cached)
                        malformed(kChangesEntry, *prev_node,
                                  "cached value is only valid on formula content");
                    const auto parsed = parse_number(*v);
                    if (!parsed) malformed(kChangesEntry, *prev_node, "bad cached value: " + *v);
                    rec.prev_cached_value = *parsed;
                }
            };

            if (*kind == "content") {
                const std::string* addr_text = node.find_attr("addr");
                if (!addr_text) malformed(kChangesEntry, node, "content change without addr");
                auto [sheet_name, addr_part] = split_sheet(*addr_text);
                rec.sheet = resolve_sheet(sheet_name, id);
                const auto addr = parse_address(addr_part);
                if (!addr) invalid(id, "bad address: " + *addr_text);
                rec.kind = ContentChangeKind{};
                rec.target = addr->plain();
                load_body(true);
                if (content_equal(rec.previous, rec.next))
                    invalid(id, "previous equals new");
            } else if (*kind == "move") {
                const std::string* from_text = node.find_attr("from");
                const std::string* to_text = node.find_attr("to");
                if (!from_text || !to_text)
                    malformed(kChangesEntry, node, "move without from/to");
                auto [from_sheet, from_part] = split_sheet(*from_text);
                auto [to_sheet, to_part] = split_sheet(*to_text);
                if (from_sheet != to_sheet) invalid(id, "move crosses sheets");
                rec.sheet = resolve_sheet(from_sheet, id);
                const bool is_block = from_part.find(':') != std::string::npos;
                if (is_block) {
                    const auto from_range = parse_range(from_part);
                    const auto to_range = parse_range(to_part);
                    if (!from_range || !to_range) invalid(id, "bad move region");
                    rec.kind = BlockMoveKind{*from_range, *to_range};
                } else {
                    const auto from = parse_address(from_part);
                    const auto to = parse_address(to_part);
                    if (!from || !to) invalid(id, "bad move address");
                    if (from->same_cell(*to)) invalid(id, "move from equals to");
                    rec.kind = MoveKind{from->plain(), to->plain()};
                    rec.target = to->plain();
                    load_body(true);
                }
            } else {
                const std::string* index_text = node.find_attr("index");
                if (!index_text) malformed(kChangesEntry, node, "structural change without index");
                int index = 0;
                try {
                    std::size_t used = 0;
                    index = std::stoi(*index_text, &used);
                    if (used != index_text->size()) throw std::invalid_argument("trailing");
                } catch (const std::exception&) {
                    malformed(kChangesEntry, node, "bad index: " + *index_text);
                }
                if (index < 1) invalid(id, "structural index must be >= 1");
                const std::string* sheet_attr = node.find_attr("sheet");
                rec.sheet = resolve_sheet(sheet_attr ? *sheet_attr : "", id);
                if (*kind == "row-insert")
                    rec.kind = RowInsertKind{index};
                else if (*kind == "row-delete")
                    rec.kind = RowDeleteKind{index};
                else if (*kind == "col-insert")
                    rec.kind = ColInsertKind{index};
                else if (*kind == "col-delete")
                    rec.kind = ColDeleteKind{index};
                else
                    invalid(id, "unknown kind: " + *kind);
            }
            records.push_back(std::move(rec));
        }
        return records;
    }
};

}  // namespace

std::string save_document(const Document& doc) {
    check_cell_invariants(doc);
    check_record_invariants(doc);
    std::vector<ZipEntry> entries;
    entries.push_back({kMetaEntry, render_meta(doc)});
    entries.push_back({kContentEntry, render_content_xml(doc)});
    entries.push_back({kChangesEntry, render_changes_xml(doc)});
    return zip_pack(entries);
}

LoadResult load_document(std::string_view bytes) {
    const auto entries = zip_unpack(bytes);
    auto entry_of = [&](const char* name) -> const std::string& {
        for (const auto& e : entries)
            if (e.name == name) return e.data;
        throw ContainerError(ContainerErrc::MissingEntry,
                             std::string("missing archive entry: ") + name, name);
    };

    Loader loader;
    DocumentMeta meta = loader.load_meta(entry_of(kMetaEntry));
    std::vector<SheetData> sheets = loader.load_content(entry_of(kContentEntry));
    std::vector<ChangeRecord> changes = loader.load_changes(entry_of(kChangesEntry), sheets);

    LoadResult result{Document::from_parts(std::move(meta), std::move(sheets), std::move(changes)),
                      std::move(loader.warnings)};
    for (const auto& v : result.document.verify_chain())
        result.warnings.push_back("chain violation at record " + std::to_string(v.record_id) +
                                  " (cell " + render_address(v.cell) + "): " + v.reason);
    return result;
}

}  // namespace celltrail
