import string

import pytest
from hypothesis import given, settings, strategies as st

from scanforge.errors import LexicalError, ParseError
from scanforge.frontend import (DeclKind, ImportForm, extract_declarations, extract_imports,
                                extract_pragmas, normalize_path, parse_source, pragma_offsets, scrub)
from scanforge.versions import Version


def imports_of(text):
    return extract_imports(scrub(text), text)


class TestScrub:
    def test_block_comment_blanked(self):
        out = scrub("a /*x*/ b")
        assert out == "a" + " " * 7 + "b"
        assert len(out) == len("a /*x*/ b")

    def test_string_contents_hide_import(self):
        text = 's = "import \\"X.sol\\";";'
        out = scrub(text)
        assert len(out) == len(text)
        assert "import" not in out
        assert imports_of(text) == []

    def test_line_comment_blanked(self):
        assert scrub('// import "Y.sol"') == " " * len('// import "Y.sol"')
        assert imports_of('// import "Y.sol"') == []

    def test_newlines_kept_in_block_comment(self):
        text = "a/*\n\n*/b"
        assert scrub(text) == "a  \n\n  b"

    def test_unterminated_block_comment_names_line(self):
        with pytest.raises(LexicalError) as err:
            scrub("contract A {}\n\n/* never closed")
        assert err.value.line == 3

    def test_comment_markers_inside_string_are_code(self):
        text = 'string s = "// not a comment"; import "A.sol";'
        assert [d.raw_path for d in imports_of(text)] == ["A.sol"]


class TestPragmas:
    def test_caret(self):
        (c,) = extract_pragmas(scrub("pragma solidity ^0.8.0;"))
        assert c.interval() == (Version(0, 8, 0), Version(0, 9, 0))

    def test_conjunction(self):
        (c,) = extract_pragmas("pragma solidity >=0.6.0 <0.8.0;")
        assert len(c.clauses) == 2
        assert c.interval() == (Version(0, 6, 0), Version(0, 8, 0))

    def test_absent(self):
        assert extract_pragmas("contract C {}") == []

    def test_other_pragmas_ignored(self):
        assert len(extract_pragmas("pragma abicoder v2; pragma experimental ABIEncoderV2; pragma solidity 0.7.6;")) == 1

    def test_multiple_kept_in_order(self):
        cs = extract_pragmas("pragma solidity >=0.6.0; pragma solidity <0.7.0;")
        assert [str(c) for c in cs] == [">=0.6.0", "<0.7.0"]

    def test_malformed_reports_offset(self):
        with pytest.raises(ParseError) as err:
            extract_pragmas("\n\npragma solidity ^zero;")
        assert err.value.offset >= 2

    def test_missing_semicolon(self):
        with pytest.raises(ParseError):
            extract_pragmas("pragma solidity ^0.8.0")


class TestImports:
    def test_plain_package_import(self):
        (d,) = imports_of('import "@openzeppelin/contracts/token/ERC20/ERC20.sol";')
        assert d.raw_path == "@openzeppelin/contracts/token/ERC20/ERC20.sol"
        assert d.form is ImportForm.PLAIN
        assert d.offset == 0

    def test_symbol_list(self):
        (d,) = imports_of('import {SafeMath} from "./math/SafeMath.sol";')
        assert d.form is ImportForm.SYMBOL_LIST
        assert d.raw_path == "./math/SafeMath.sol"

    @pytest.mark.parametrize("stmt, form", [
        ("import 'a/B.sol';", ImportForm.PLAIN),
        ('import "a/B.sol" as B;', ImportForm.ALIASED),
        ('import * as B from "a/B.sol";', ImportForm.GLOB_ALIASED),
        ('import {X as Y, Z} from "a/B.sol";', ImportForm.SYMBOL_LIST),
        ('import\n  {\n    X\n  }\n  from\n  "a/B.sol"\n;', ImportForm.SYMBOL_LIST),
    ])
    def test_all_four_forms(self, stmt, form):
        (d,) = imports_of(stmt)
        assert d.form is form
        assert d.raw_path == "a/B.sol"

    def test_order_and_offsets(self):
        text = 'pragma solidity ^0.8.0;\nimport "A.sol";\n// import "Z.sol";\nimport "B.sol";\n'
        ds = imports_of(text)
        assert [d.raw_path for d in ds] == ["A.sol", "B.sol"]
        assert all(text[d.offset:].startswith("import") for d in ds)

    def test_no_semicolon_before_eof(self):
        with pytest.raises(ParseError):
            imports_of('import "A.sol"')

    def test_unsupported_form_flagged(self):
        with pytest.raises(ParseError):
            imports_of('import A from "A.sol";')

    def test_empty_path_rejected(self):
        with pytest.raises(ParseError):
            imports_of('import "";')


class TestDeclarations:
    def test_contract(self):
        assert extract_declarations("contract C {}") == [("C", DeclKind.CONTRACT)]

    def test_library_and_interface(self):
        text = "library SafeMath { function f() internal {} } interface IERC20 { function g() external; }"
        assert extract_declarations(text) == [("SafeMath", DeclKind.LIBRARY), ("IERC20", DeclKind.INTERFACE)]

    def test_abstract(self):
        assert extract_declarations("abstract contract Base {}") == [("Base", DeclKind.ABSTRACT)]

    def test_nested_braces_skipped(self):
        text = "contract A { struct S { uint x; } function f() public { if (true) { } } } contract B is A {}"
        assert [d.name for d in extract_declarations(text)] == ["A", "B"]

    def test_commented_out_contract_ignored(self):
        assert extract_declarations(scrub("// contract Old {}\ncontract New {}")) == [("New", DeclKind.CONTRACT)]


class TestSourceFile:
    def test_parse_source(self):
        data = b'pragma solidity ^0.8.0;\nimport "./B.sol";\ncontract A {}\n'
        sf = parse_source("./x/../A.sol", data)
        assert sf.path == "A.sol"
        assert sf.lines == 3
        assert sf.deployable
        assert [d.raw_path for d in sf.imports] == ["./B.sol"]
        assert len(sf.content_hash) == 64

    def test_deterministic(self):
        data = b'pragma solidity ^0.8.0;\nimport {A} from "./A.sol";\ncontract B {}\n'
        assert parse_source("B.sol", data) == parse_source("B.sol", data)

    def test_invalid_utf8(self):
        from scanforge.frontend import DecodeError
        with pytest.raises(DecodeError):
            parse_source("bad.sol", b"contract \xff {}")

    @pytest.mark.parametrize("bad", ["../x.sol", "/abs/x.sol", "a/../../x.sol"])
    def test_normalize_rejects_escapes(self, bad):
        with pytest.raises(ValueError):
            normalize_path(bad)

    def test_normalize(self):
        assert normalize_path("a\\b/./c/../d.sol") == "a/b/d.sol"


# -- properties ---------------------------------------------------------------------

solidityish = st.text(alphabet=string.ascii_letters + string.digits + " \n\t{};\"'/*\\.-_=^<>@", max_size=200)


def _scrubbable(t):
    try:
        scrub(t)
        return True
    except LexicalError:
        return False


@settings(max_examples=300, deadline=None)
@given(solidityish.filter(_scrubbable))
def test_scrub_idempotent_and_length_preserving(text):
    once = scrub(text)
    assert len(once) == len(text)
    assert scrub(once) == once
    assert once.count("\n") == text.count("\n")


path_st = st.from_regex(r"[a-z]{1,6}(/[a-z]{1,6}){0,2}\.sol", fullmatch=True)
noise_st = st.text(alphabet=string.ascii_letters + " \n", max_size=20)


@settings(max_examples=200, deadline=None)
@given(real=st.lists(path_st, max_size=4), hidden=st.lists(path_st, min_size=1, max_size=4),
       noise=noise_st, style=st.sampled_from(["line", "block", "string", "sstring"]))
def test_directives_in_comments_and_strings_never_extracted(real, hidden, noise, style):
    parts = []
    for p in hidden:
        directive = f'import "{p}";'
        if style == "line":
            parts.append(f"// {noise.replace(chr(10), ' ')} {directive}\n")
        elif style == "block":
            parts.append(f"/* {noise} {directive} */\n")
        elif style == "string":
            parts.append(f'string s = "{directive.replace(chr(34), chr(92) + chr(34))}";\n')
        else:
            parts.append(f"string s = '{directive}';\n")
    for p in real:
        parts.append(f'import "{p}";\n')
    text = "pragma solidity ^0.8.0;\n" + "".join(parts)
    found = imports_of(text)
    assert [d.raw_path for d in found] == real
    for d in found:
        assert text[d.offset:d.offset + 6] == "import"
    for off in pragma_offsets(scrub(text)):
        assert text[off:off + 6] == "pragma"
