"""Local form-fill suggestion engine.

Collects browsing/entry context into a scrapbook, serializes it together
with the target form's structure and previously saved examples into a
few-shot chat prompt, queries a chat-completion backend at temperature 0,
and returns per-field suggestions.
"""

__version__ = "0.1.0"
