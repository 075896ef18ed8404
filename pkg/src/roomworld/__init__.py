"""roomworld: a symbolic scene-graph simulator with procedurally
generated escape rooms, a solvability oracle, language-driven scene
editing, a multi-agent episode harness, and a session server."""

__version__ = "0.1.0"
