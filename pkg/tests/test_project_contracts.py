import ast
import os
import re
import subprocess
import tomllib
import unittest
from pathlib import Path

from src import app

ROOT = Path(__file__).resolve().parents[1]


class ProjectManifestContractTests(unittest.TestCase):
    def setUp(self) -> None:
        self.pyproject = tomllib.loads((ROOT / "pyproject.toml").read_text())

    def test_console_script_points_at_cli_entry(self) -> None:
        target = self.pyproject["project"]["scripts"]["certcoder"]

        self.assertEqual(target, "src.app:main")
        self.assertTrue(callable(app.main))

    def test_coverage_omits_only_existing_files(self) -> None:
        for path in self.pyproject["tool"]["coverage"]["run"]["omit"]:
            with self.subTest(path=path):
                self.assertTrue((ROOT / path).is_file())

    def test_source_modules_have_no_module_docstrings(self) -> None:
        for path in sorted((ROOT / "src").rglob("*.py")):
            with self.subTest(module=str(path.relative_to(ROOT))):
                self.assertIsNone(ast.get_docstring(ast.parse(path.read_text(encoding="utf-8"))))

    def test_security_policy_keeps_private_reporting(self) -> None:
        policy = (ROOT / "SECURITY.md").read_text()

        self.assertIn("Do not open public issues", policy)
        self.assertIn("certificate", policy)


class ExperimentScriptContractTests(unittest.TestCase):
    script = "scripts/run-synthetic-experiment.sh"

    def test_scripts_parse(self) -> None:
        for path in sorted((ROOT / "scripts").glob("*.sh")):
            with self.subTest(script=path.name):
                result = subprocess.run(
                    ["bash", "-n", str(path)], capture_output=True, text=True, check=False
                )
                self.assertEqual(result.returncode, 0, result.stderr)

    def test_only_registered_commands_are_invoked(self) -> None:
        registered = {command.__name__.rsplit(".", 1)[-1] for command in app.COMMANDS}
        text = (ROOT / self.script).read_text()

        invoked = set(re.findall(r'"\$\{certcoder\[@\]\}" (\w+)', text))

        self.assertTrue(invoked)
        self.assertLessEqual(invoked, registered)

    def test_seeded_commands_pass_the_seed(self) -> None:
        text = (ROOT / self.script).read_text().replace("\\\n", " ")
        for line in text.splitlines():
            match = re.search(r'"\$\{certcoder\[@\]\}" (synth|cv|train)\b', line)
            if match:
                with self.subTest(command=match.group(1)):
                    self.assertIn('--seed "${seed}"', line)

    def test_rejects_non_numeric_seed_before_running_anything(self) -> None:
        env = os.environ.copy()
        env.update(SEED="abc", CERTCODER="false")

        result = subprocess.run(
            ["bash", self.script, str(ROOT / ".tmp" / "never-created")],
            cwd=ROOT,
            env=env,
            capture_output=True,
            text=True,
            check=False,
        )

        self.assertEqual(result.returncode, 1)
        self.assertIn("SEED must be a nonnegative integer", result.stderr)
        self.assertFalse((ROOT / ".tmp" / "never-created").exists())


if __name__ == "__main__":
    unittest.main()
