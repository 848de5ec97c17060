"""Adversarial and scripted cognition engines for fault-injection tests."""

from scl.domain import CognitionOutput, FinalAction, ToolCall


class ScriptedEngine:
    """Replays a fixed proposal sequence; repeats the last item when
    exhausted. Items may be callables taking the context."""

    def __init__(self, outputs):
        self._outputs = list(outputs)
        self._index = 0

    def next_proposal(self, ctx):
        item = self._outputs[min(self._index, len(self._outputs) - 1)]
        self._index += 1
        return item(ctx) if callable(item) else item


def uncited_final_engine():
    """Rogue engine: always proposes a final answer without citations."""
    return ScriptedEngine([
        CognitionOutput(reasoning="done, trust me", evidence_refs=(), proposal=FinalAction.answer("done")),
    ])


def redundant_caller_engine(city="San Francisco"):
    """Rogue engine: proposes the same tool call forever."""
    call = ToolCall("get_weather", {"city": city})
    return ScriptedEngine([
        CognitionOutput(reasoning=f"checking {city}", evidence_refs=(), proposal=call),
    ])


def cited_final(ctx, text="done"):
    """A final answer citing whatever evidence is currently stored."""
    refs = tuple(e.ref for e in ctx.memory_view.evidence_items())
    return CognitionOutput(reasoning="wrapping up with stored evidence", evidence_refs=refs, proposal=FinalAction.answer(text))
