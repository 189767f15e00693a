"""Bridge between neural encoders/pipelines and the adaptsp file formats.

The bridge never imports the toolkit: it produces and consumes the array +
manifest formats on disk and drives the `adaptsp` CLI as a subprocess, so
the numerics stay decoupled from the ML runtime.
"""

from adaptsp_bridge.battery import PromptBattery, load_battery

__all__ = ["PromptBattery", "load_battery"]
__version__ = "0.1.0"
