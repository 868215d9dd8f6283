"""打包元数据: setup.py 与 docs/conf.py 保持一致"""
import ast
from pathlib import Path


ROOT = Path(__file__).resolve().parents[2]


def setup_keywords():
    tree = ast.parse((ROOT / "setup.py").read_text(encoding="utf-8"))
    call = next(
        node for node in ast.walk(tree)
        if isinstance(node, ast.Call) and getattr(node.func, "id", None) == "setup"
    )
    return {kw.arg: kw.value for kw in call.keywords}


def docs_assignments():
    tree = ast.parse((ROOT / "docs" / "conf.py").read_text(encoding="utf-8"))
    return {
        node.targets[0].id: node.value.value
        for node in tree.body
        if isinstance(node, ast.Assign) and isinstance(node.targets[0], ast.Name) and isinstance(node.value, ast.Constant)
    }


class TestPackaging:
    def test_author_matches_the_docs(self):
        author = setup_keywords()["author"]
        assert isinstance(author, ast.Constant)
        assert author.value == docs_assignments()["author"]
        assert "author_email" not in setup_keywords()

    def test_console_script(self):
        scripts = ast.literal_eval(setup_keywords()["entry_points"])["console_scripts"]
        assert scripts == ["pdritz = pdirichlet_ritz.backend.startup:main"]
