import io
import json
import os

from app.core.errors import DSLSyntaxError, TaskValidationError
from app.main import main
from app.middleware.error_handler import EXIT_IO, EXIT_OK, EXIT_VALIDATION, error_content, handle_exception
from app.models.references import REFERENCES_DIR

H5_CODE = os.path.join(REFERENCES_DIR, "H5.code")
H2_TASK = os.path.join(REFERENCES_DIR, "H2.task.json")


def last_json_line(text):
    return json.loads(text.strip().splitlines()[-1])


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestCommands:
    def test_parse_prints_canonical_text(self, capsys):
        assert main(["parse", H5_CODE]) == EXIT_OK
        with open(H5_CODE, encoding="utf-8") as fh:
            assert capsys.readouterr().out == fh.read()

    def test_parse_json(self, capsys):
        assert main(["parse", os.path.join(REFERENCES_DIR, "K10.code"), "--json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["ast"]["dialect"] == "karel"
        assert payload["props"]["struct"] == "Run{While}"
        assert payload["props"]["size"] == 7

    def test_mutation_counts(self, capsys):
        assert main(["mutate", H5_CODE, "--count-only"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["countAll"] == 66
        assert payload["countD01"] == 294

    def test_config_file_sets_budget(self, tmp_path, capsys):
        config = write(tmp_path, "params.cfg", "# mutation budget\ndeltaSize = 0\n")
        code = write(tmp_path, "turn.code", "def Run(){ turnLeft }")
        assert main(["--config", config, "mutate", code]) == EXIT_OK
        assert capsys.readouterr().out == "def Run(){\n  turnLeft\n}\ndef Run(){\n  turnRight\n}\n"

    def test_render(self, capsys):
        assert main(["render", H2_TASK]) == EXIT_OK
        assert capsys.readouterr().out.splitlines()[0] == "^....+####"

    def test_run(self, capsys):
        assert main(["run", H2_TASK, os.path.join(REFERENCES_DIR, "H2.code")]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["solved"] is True
        assert payload["counts"]["moves"] == 5

    def test_shortcut(self, capsys):
        assert main(["shortcut", H2_TASK, "--max-len", "6"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "found"
        assert payload["actions"] == ["turnRight"] + ["move"] * 5

    def test_symrun(self, tmp_path, capsys):
        code = write(tmp_path, "variant.code",
                     "def Run(){ move turnLeft RepeatUntil(goal){ move If(pathRight){ turnRight } } }")
        assert main(["symrun", code, "--decisions", "19,1,1,0", "--n", "4"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["status"] == "taskEmitted"
        assert payload["task"]["goal"] == [3, 1]
        assert payload["config"] == {"row": 2, "col": 2, "dir": "west"}

    def test_references(self, capsys):
        assert main(["references"]) == EXIT_OK
        listing = json.loads(capsys.readouterr().out)
        assert [entry["name"] for entry in listing] == [
            "H1", "H2", "H3", "H4", "H5", "H6", "K7", "K8", "K9", "K10",
        ]
        assert all(entry["hasTask"] for entry in listing)


class TestErrors:
    def test_syntax_error_exit_code(self, tmp_path, capsys):
        code = write(tmp_path, "bad.code", "def Run(){\n  Repeat(11){ move }\n}")
        assert main(["parse", code]) == EXIT_VALIDATION
        payload = last_json_line(capsys.readouterr().err)
        assert payload["line"] == 2
        assert "column" in payload

    def test_invalid_task(self, tmp_path, capsys):
        task = write(tmp_path, "bad.json", "{}")
        assert main(["render", task]) == EXIT_VALIDATION
        assert "field" in last_json_line(capsys.readouterr().err)

    def test_missing_file(self, capsys):
        assert main(["render", "/nonexistent/task.json"]) == EXIT_IO
        assert "message" in last_json_line(capsys.readouterr().err)

    def test_exhausted_decisions(self, tmp_path, capsys):
        code = write(tmp_path, "loop.code", "def Run(){ RepeatUntil(goal){ move } }")
        assert main(["symrun", code, "--decisions", "16"]) == EXIT_VALIDATION
        payload = last_json_line(capsys.readouterr().err)
        assert payload["index"] == 1

    def test_malformed_decisions(self, tmp_path, capsys):
        code = write(tmp_path, "loop.code", "def Run(){ RepeatUntil(goal){ move } }")
        assert main(["symrun", code, "--decisions", "16,x"]) == EXIT_VALIDATION

    def test_error_content(self):
        assert error_content(DSLSyntaxError("oops", 3, 4))["line"] == 3
        assert error_content(TaskValidationError("goal", "multiple goals")) == {
            "message": "goal: multiple goals", "field": "goal", "reason": "multiple goals",
        }

    def test_unexpected_errors_are_masked(self):
        stream = io.StringIO()
        assert handle_exception(RuntimeError("boom"), stream) == EXIT_VALIDATION
        assert json.loads(stream.getvalue()) == {"message": "Internal error"}

    def test_io_errors(self):
        stream = io.StringIO()
        assert handle_exception(FileNotFoundError(2, "No such file", "x.json"), stream) == EXIT_IO
