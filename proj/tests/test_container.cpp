#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "celltrail/container_io.hpp"
#include "celltrail/xml.hpp"
#include "celltrail/zip.hpp"
#include "test_support.hpp"

using namespace celltrail;

TEST_CASE("cell addresses render and parse round-trip") {
    CHECK(render_address(cell_at(1, 1)) == "A1");
    CHECK(render_address(cell_at(26, 3)) == "Z3");
    CHECK(render_address(cell_at(27, 10)) == "AA10");
    CHECK(render_address(cell_at(52, 1)) == "AZ1");
    CHECK(render_address(cell_at(53, 1)) == "BA1");
    CHECK(render_address(cell_at(702, 7)) == "ZZ7");
    CHECK(render_address(cell_at(703, 7)) == "AAA7");
    CHECK(render_address(CellAddress{5, 3, true, true}) == "$E$3");
    CHECK(render_address(CellAddress{1, 7, true, false}) == "$A7");

    CHECK(parse_address("A1") == cell_at(1, 1));
    CHECK(parse_address("$E$3") == CellAddress{5, 3, true, true});
    CHECK(parse_address("C$1") == CellAddress{3, 1, false, true});
    CHECK(render_address(*parse_address("$E$3")) == "$E$3");
    CHECK(render_address(*parse_address("A1")) == "A1");

    CHECK_FALSE(parse_address(""));
    CHECK_FALSE(parse_address("1A"));
    CHECK_FALSE(parse_address("A0"));
    CHECK_FALSE(parse_address("A"));
    CHECK_FALSE(parse_address("$$A1"));
    CHECK_FALSE(parse_address("A1B"));
    CHECK_FALSE(parse_address("a1"));

    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
        CellAddress a{std::uniform_int_distribution<int>(1, 20000)(rng),
                      std::uniform_int_distribution<int>(1, 99999)(rng),
                      static_cast<bool>(rng() & 1), static_cast<bool>(rng() & 1)};
        CHECK(parse_address(render_address(a)) == a);
    }
}

TEST_CASE("ranges normalize and render") {
    const CellRange r = normalize_range(*parse_address("B2"), *parse_address("A1"));
    CHECK(render_range(r) == "A1:B2");
    CHECK(parse_range("B2:A1")->start == cell_at(1, 1));
    CHECK(parse_range("C3")->start == cell_at(3, 3));
    CHECK(parse_range("C3")->end == cell_at(3, 3));
    CHECK_FALSE(parse_range("A1:"));
    CHECK(r.contains(cell_at(1, 2)));
    CHECK_FALSE(r.contains(cell_at(3, 1)));
}

TEST_CASE("canonical number rendering round-trips bit-exactly") {
    CHECK(render_number(0.0) == "0");
    CHECK(render_number(-0.0) == "-0");
    CHECK(render_number(1.5) == "1.5");
    CHECK(render_number(5.0) == "5");
    CHECK(*parse_number("-0") == 0.0);
    CHECK(std::signbit(*parse_number("-0")));
    CHECK_FALSE(parse_number("1.5x"));
    CHECK_FALSE(parse_number(""));
    CHECK_FALSE(parse_number("inf"));
    CHECK_FALSE(parse_number("nan"));

    std::mt19937_64 rng(11);
    int checked = 0;
    while (checked < 20000) {
        const std::uint64_t bits = rng();
        double v;
        __builtin_memcpy(&v, &bits, sizeof(v));
        if (!std::isfinite(v)) continue;
        ++checked;
        const auto back = parse_number(render_number(v));
        REQUIRE(back.has_value());
        CHECK(bits_equal(*back, v));
    }
    // Denormals and boundary values.
    for (const double v : {5e-324, -5e-324, 2.2250738585072014e-308, 1.7976931348623157e308,
                           -1.7976931348623157e308}) {
        CHECK(bits_equal(*parse_number(render_number(v)), v));
    }
}

TEST_CASE("set_cell appends self-contained records") {
    Document doc;
    const ChangeRecord& rec =
        doc.set_cell(cell_at(1, 1), number_content(3.0), "alice", Timestamp{10});
    CHECK(rec.id == 1);
    CHECK(rec.author == "alice");
    CHECK(is_content_change(rec.kind));
    CHECK(is_empty(rec.previous));
    CHECK(content_equal(rec.next, number_content(3.0)));
    CHECK_FALSE(rec.prev_cached_value.has_value());

    SUBCASE("identical content is rejected") {
        CHECK_THROWS_AS(doc.set_cell(cell_at(1, 1), number_content(3.0), "bob", Timestamp{11}),
                        ContainerError);
        try {
            doc.set_cell(cell_at(1, 1), number_content(3.0), "bob", Timestamp{11});
        } catch (const ContainerError& e) {
            CHECK(e.code() == ContainerErrc::NoChange);
        }
    }
    SUBCASE("clock regression is rejected") {
        try {
            doc.set_cell(cell_at(1, 2), number_content(1.0), "bob", Timestamp{9});
            FAIL("expected TimestampRegression");
        } catch (const ContainerError& e) {
            CHECK(e.code() == ContainerErrc::TimestampRegression);
        }
    }
    SUBCASE("equal timestamps are allowed") {
        doc.set_cell(cell_at(1, 2), number_content(1.0), "bob", Timestamp{10});
        CHECK(doc.changes().size() == 2);
    }
    SUBCASE("0.0 and -0.0 are distinct contents") {
        doc.set_cell(cell_at(1, 1), number_content(-0.0), "bob", Timestamp{12});
        CHECK(doc.changes().back().id == 2);
    }
}

TEST_CASE("100 random set_cell calls produce ids 1..100") {
    Document doc;
    std::mt19937_64 rng(3);
    int done = 0;
    std::int64_t clock = 0;
    while (done < 100) {
        const CellAddress addr = test_support::random_addr(rng);
        CellContent content = test_support::random_content(rng);
        if (content_equal(doc.content_at(addr), content)) continue;
        doc.set_cell(addr, std::move(content), "alice", Timestamp{++clock});
        ++done;
    }
    REQUIRE(doc.changes().size() == 100);
    for (std::size_t i = 0; i < 100; ++i)
        CHECK(doc.changes()[i].id == static_cast<std::int64_t>(i) + 1);
}

TEST_CASE("structural edits emit marker plus per-cell records") {
    SUBCASE("row delete beyond content emits only the marker") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), number_content(1.0));
        const auto records = doc.structural_edit(RowDeleteOp{2}, "alice", Timestamp{1});
        CHECK(records.size() == 1);
        CHECK(std::holds_alternative<RowDeleteKind>(records[0].kind));
    }
    SUBCASE("2x2 block move emits one marker and four moves") {
        Document doc;
        for (int c = 1; c <= 2; ++c)
            for (int r = 1; r <= 2; ++r)
                doc.set_base_cell(cell_at(c, r), number_content(c * 10.0 + r));
        const auto records = doc.structural_edit(
            MoveBlockOp{CellRange{cell_at(1, 1), cell_at(2, 2)}, cell_at(4, 4)}, "alice",
            Timestamp{1});
        REQUIRE(records.size() == 5);
        CHECK(std::holds_alternative<BlockMoveKind>(records[0].kind));
        for (std::size_t i = 1; i < 5; ++i) CHECK(is_cell_move(records[i].kind));
        CHECK(content_equal(doc.content_at(cell_at(4, 4)), number_content(11.0)));
        CHECK(content_equal(doc.content_at(cell_at(5, 5)), number_content(22.0)));
        CHECK(is_empty(doc.content_at(cell_at(1, 1))));
    }
    SUBCASE("move onto occupied cells captures the clobbered content") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), number_content(1.0));
        doc.set_base_cell(cell_at(3, 1), text_content("gone"));
        const auto records = doc.structural_edit(
            MoveBlockOp{CellRange{cell_at(1, 1), cell_at(1, 1)}, cell_at(3, 1)}, "alice",
            Timestamp{1});
        REQUIRE(records.size() == 2);
        CHECK(content_equal(records[1].previous, text_content("gone")));
        CHECK(content_equal(records[1].next, number_content(1.0)));
        CHECK(doc.verify_chain().empty());
    }
    SUBCASE("overlapping move regions are rejected") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), number_content(1.0));
        try {
            doc.structural_edit(MoveBlockOp{CellRange{cell_at(1, 1), cell_at(2, 1)}, cell_at(2, 1)},
                                "alice", Timestamp{1});
            FAIL("expected RegionOverlap");
        } catch (const ContainerError& e) {
            CHECK(e.code() == ContainerErrc::RegionOverlap);
        }
    }
    SUBCASE("row insert then delete restores the grid") {
        std::mt19937_64 rng(5);
        Document doc = test_support::random_base_document(rng, 15);
        const Document before = doc;
        doc.structural_edit(ColInsertOp{1}, "alice", Timestamp{1});
        doc.structural_edit(ColDeleteOp{1}, "alice", Timestamp{2});
        CHECK(doc.grid_equals(before));
        CHECK(doc.verify_chain().empty());
    }
    SUBCASE("bad index is out of bounds") {
        Document doc;
        CHECK_THROWS_AS(doc.structural_edit(RowInsertOp{0}, "a", Timestamp{1}), ContainerError);
    }
}

TEST_CASE("base writes are sealed once history exists") {
    Document doc;
    doc.set_base_cell(cell_at(1, 1), number_content(1.0));
    doc.set_cell(cell_at(1, 2), number_content(2.0), "alice", Timestamp{1});
    CHECK_THROWS_AS(doc.set_base_cell(cell_at(1, 3), number_content(3.0)), ContainerError);
}

TEST_CASE("verify_chain") {
    SUBCASE("clean after arbitrary tracked edits") {
        std::mt19937_64 rng(17);
        for (int round = 0; round < 5; ++round) {
            Document doc = test_support::random_tracked_document(rng, 200);
            CHECK(doc.verify_chain().empty());
        }
    }
    SUBCASE("a tampered record is pinpointed") {
        std::mt19937_64 rng(19);
        Document doc = test_support::random_tracked_document(rng, 20);
        // Forge a copy whose record 5 claims a different `new` content.
        auto sheets = doc.sheets();
        auto changes = doc.changes();
        REQUIRE(changes.size() >= 5);
        ChangeRecord& victim = changes[4];
        // Pick a content value no real cell uses.
        victim.next = text_content("__forged__");
        victim.kind = ContentChangeKind{};
        if (!victim.target) victim.target = cell_at(1, 1);
        victim.previous = text_content("__also_forged__");
        const Document forged =
            Document::from_parts(doc.meta(), std::move(sheets), std::move(changes));
        const auto violations = forged.verify_chain();
        REQUIRE_FALSE(violations.empty());
        bool names_record_5 = false;
        for (const auto& v : violations)
            if (v.record_id == 5) names_record_5 = true;
        CHECK(names_record_5);
    }
}

TEST_CASE("smallest valid archive loads") {
    // Hand-assembled: one sheet, A1 = 5, no changes.
    std::vector<ZipEntry> entries;
    entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
    entries.push_back({"content.xml",
                       "<document><sheet name=\"Sheet1\"><cell addr=\"A1\" number=\"5\"/>"
                       "</sheet></document>"});
    entries.push_back({"changes.xml", "<changes></changes>"});
    const LoadResult result = load_document(zip_pack(entries));
    CHECK(result.warnings.empty());
    CHECK(result.document.sheet_count() == 1);
    CHECK(result.document.changes().empty());
    CHECK(content_equal(result.document.content_at(cell_at(1, 1)), number_content(5.0)));
    CHECK(result.document.cached_value_at(cell_at(1, 1)) == 5.0);
    CHECK(result.document.meta().creator == "t");
}

TEST_CASE("id gaps are rejected with the offending id") {
    std::vector<ZipEntry> entries;
    entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
    entries.push_back({"content.xml", "<document><sheet name=\"S\"/></document>"});
    entries.push_back(
        {"changes.xml",
         "<changes>"
         "<change id=\"1\" author=\"a\" date=\"2003-10-07T14:00:00Z\" kind=\"content\" "
         "addr=\"A1\"><previous/><new number=\"1\"/></change>"
         "<change id=\"3\" author=\"a\" date=\"2003-10-07T14:00:01Z\" kind=\"content\" "
         "addr=\"A2\"><previous/><new number=\"2\"/></change>"
         "</changes>"});
    try {
        load_document(zip_pack(entries));
        FAIL("expected InvalidRecord");
    } catch (const ContainerError& e) {
        CHECK(e.code() == ContainerErrc::InvalidRecord);
        CHECK(e.record_id() == 3);
        CHECK(std::string(e.what()).find("gap in id sequence") != std::string::npos);
    }
}

TEST_CASE("loader reports archive and xml defects") {
    SUBCASE("not a zip") {
        CHECK_THROWS_AS(load_document("plainly not a zip"), ContainerError);
    }
    SUBCASE("missing entry") {
        std::vector<ZipEntry> entries;
        entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
        try {
            load_document(zip_pack(entries));
            FAIL("expected MissingEntry");
        } catch (const ContainerError& e) {
            CHECK(e.code() == ContainerErrc::MissingEntry);
        }
    }
    SUBCASE("malformed xml carries entry and line") {
        std::vector<ZipEntry> entries;
        entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
        entries.push_back({"content.xml", "<document>\n<sheet name=\"S\">\n<cell oops\n"});
        entries.push_back({"changes.xml", "<changes/>"});
        try {
            load_document(zip_pack(entries));
            FAIL("expected MalformedXml");
        } catch (const ContainerError& e) {
            CHECK(e.code() == ContainerErrc::MalformedXml);
            CHECK(e.entry() == "content.xml");
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("unknown attributes warn but load") {
        std::vector<ZipEntry> entries;
        entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
        entries.push_back({"content.xml",
                           "<document><sheet name=\"S\"><cell addr=\"A1\" number=\"1\" "
                           "style=\"bold\"/></sheet></document>"});
        entries.push_back({"changes.xml", "<changes/>"});
        const LoadResult result = load_document(zip_pack(entries));
        REQUIRE(result.warnings.size() == 1);
        CHECK(result.warnings[0].find("style") != std::string::npos);
    }
    SUBCASE("chain violations load with a warning, not an error") {
        std::vector<ZipEntry> entries;
        entries.push_back({"meta.xml", "<meta creator=\"t\" created=\"2003-10-07T14:00:00Z\"/>"});
        entries.push_back({"content.xml", "<document><sheet name=\"S\"/></document>"});
        entries.push_back(
            {"changes.xml",
             "<changes><change id=\"1\" author=\"a\" date=\"2003-10-07T14:00:00Z\" "
             "kind=\"content\" addr=\"A1\"><previous/><new number=\"9\"/></change></changes>"});
        const LoadResult result = load_document(zip_pack(entries));
        REQUIRE(result.warnings.size() == 1);
        CHECK(result.warnings[0].find("chain violation") != std::string::npos);
    }
}

TEST_CASE("save is deterministic and canonical") {
    std::mt19937_64 rng(23);
    Document doc = test_support::random_tracked_document(rng, 50);
    const std::string one = save_document(doc);
    const std::string two = save_document(doc);
    CHECK(one == two);

    SUBCASE("formula text is preserved verbatim") {
        Document d;
        d.set_base_cell(cell_at(3, 3), formula_content("=B1+1"));
        const std::string bytes = save_document(d);
        const auto entries = zip_unpack(bytes);
        bool found = false;
        for (const auto& e : entries)
            if (e.name == "content.xml" &&
                e.data.find("formula=\"=B1+1\"") != std::string::npos)
                found = true;
        CHECK(found);
    }
}

TEST_CASE("save/load round-trip over randomized documents") {
    std::mt19937_64 rng(29);
    for (int round = 0; round < 100; ++round) {
        Document doc = test_support::random_tracked_document(
            rng, std::uniform_int_distribution<int>(0, 40)(rng));
        if (round % 3 == 0) {
            try {
                recalculate(doc);  // exercise cached values too
            } catch (const EvalError&) {
                // Random formulas may self-reference or hit text; partially
                // updated caches are still a valid document to round-trip.
            }
        }
        const std::string bytes = save_document(doc);
        const LoadResult loaded = load_document(bytes);
        REQUIRE(loaded.document == doc);
        CHECK(save_document(loaded.document) == bytes);
    }
}

TEST_CASE("multi-sheet documents qualify addresses") {
    Document doc;
    doc.add_sheet("Term2");
    doc.set_base_cell(cell_at(1, 1), number_content(1.0), 0);
    doc.set_base_cell(cell_at(3, 3), number_content(2.0), 1);
    doc.set_cell(cell_at(3, 3), number_content(9.0), "alice", Timestamp{5}, 1);
    doc.structural_edit(RowInsertOp{1}, "bob", Timestamp{6}, 1);

    const std::string bytes = save_document(doc);
    const auto entries = zip_unpack(bytes);
    for (const auto& e : entries) {
        if (e.name == "changes.xml") {
            CHECK(e.data.find("addr=\"Term2.C3\"") != std::string::npos);
            CHECK(e.data.find("sheet=\"Term2\"") != std::string::npos);
            CHECK(e.data.find("from=\"Term2.C3\"") != std::string::npos);
        }
    }
    const LoadResult loaded = load_document(bytes);
    CHECK(loaded.document == doc);
    CHECK(loaded.warnings.empty());

    SUBCASE("sheet names must be unique and dot-free") {
        CHECK_THROWS_AS(doc.add_sheet("Term2"), ContainerError);
        CHECK_THROWS_AS(doc.add_sheet("a.b"), ContainerError);
        CHECK_THROWS_AS(doc.add_sheet(""), ContainerError);
    }
}

TEST_CASE("text cells survive xml escaping") {
    Document doc;
    doc.set_base_cell(cell_at(1, 1), text_content("a<b>&\"quoted\"\nnewline\ttab"));
    doc.set_base_cell(cell_at(1, 2), text_content("héllo ✓ école"));
    const LoadResult loaded = load_document(save_document(doc));
    CHECK(loaded.document == doc);
}

TEST_CASE("xml parser rejects text content and mismatched tags") {
    CHECK_THROWS_AS(parse_xml("<a>text</a>", "t"), ContainerError);
    CHECK_THROWS_AS(parse_xml("<a><b></a>", "t"), ContainerError);
    CHECK_THROWS_AS(parse_xml("<a attr=oops/>", "t"), ContainerError);
    const XmlNode node = parse_xml("<?xml version=\"1.0\"?><a x=\"1&amp;2\"><b/></a>", "t");
    CHECK(node.name == "a");
    CHECK(*node.find_attr("x") == "1&2");
    CHECK(node.children.size() == 1);
}

TEST_CASE("zip survives stored and deflated entries") {
    // Large compressible entry (deflated) plus tiny one (stored wins).
    std::string big(100000, 'x');
    for (std::size_t i = 0; i < big.size(); i += 7) big[i] = static_cast<char>('a' + i % 23);
    const std::vector<ZipEntry> entries{{"big.xml", big}, {"tiny.bin", "\x01\x02"}};
    const std::string packed = zip_pack(entries);
    CHECK(packed.size() < big.size());  // deflate actually engaged
    const auto out = zip_unpack(packed);
    REQUIRE(out.size() == 2);
    CHECK(out[0].data == big);
    CHECK(out[1].data == "\x01\x02");

    SUBCASE("corrupting entry bytes is detected") {
        std::string damaged = packed;
        damaged[60] ^= 0x5A;
        CHECK_THROWS_AS(zip_unpack(damaged), ContainerError);
    }
}
