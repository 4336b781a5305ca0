"""Wire-protocol component server.

Speaks newline-delimited JSON on stdio or TCP: a hello handshake advertising
the configured roles, then nlu/nlg requests answered by id. Per-request
failures come back as {"id", "error"} without killing the server; model-load
failures surface at startup.
"""

from __future__ import annotations

import json
import logging
import socket
import sys

from . import models
from .config import AdapterConfig, NLU_EPOCHS_RECURRENT

log = logging.getLogger(__name__)

SERVER_NAME = "dialoforge-adapter"


class ComponentServer:
    def __init__(self, config: AdapterConfig):
        config.validate()
        self.config = config
        self.nlu_bundle = None
        self.nlg_model = None
        if "nlu" in config.roles:
            self.nlu_bundle = self._load_nlu()
        if "nlg" in config.roles:
            self.nlg_model = self._load_nlg()

    def _load_nlu(self):
        if self.config.nlu_checkpoint:
            return models.load_nlu(self.config.nlu_checkpoint)
        if self.config.nlu_data:
            rows = models.load_nlu_rows(self.config.nlu_data)
            settings = self.config.finetune
            return models.train_nlu(rows, settings.learning_rate,
                                    settings.batch_size,
                                    epochs=NLU_EPOCHS_RECURRENT,
                                    seed=self.config.seed)
        raise RuntimeError("nlu role configured without checkpoint or data")

    def _load_nlg(self):
        identifier = self.config.model
        if identifier.startswith("hf:"):
            return models.HfLm(identifier[3:], device=self.config.device)
        if self.config.nlg_checkpoint:
            return models.load_lm(self.config.nlg_checkpoint)
        if self.config.nlg_data:
            lines = models.load_nlg_lines(self.config.nlg_data)
            settings = self.config.finetune
            return models.train_lm(lines, settings.learning_rate,
                                   settings.batch_size, settings.epochs,
                                   seed=self.config.seed)
        raise RuntimeError("nlg role configured without checkpoint or data")

    # -- request handling ---------------------------------------------------

    def handle_line(self, line):
        line = line.strip()
        if not line:
            return None
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            return {"id": None, "error": "malformed JSON line"}
        if msg.get("op") == "hello":
            return {"name": SERVER_NAME, "roles": list(self.config.roles)}
        request_id = msg.get("id")
        try:
            return {"id": request_id, "result": self._dispatch(msg)}
        except Exception as exc:  # per-request errors must not kill the loop
            return {"id": request_id, "error": str(exc)}

    def _dispatch(self, msg):
        op = msg.get("op")
        if op == "nlu":
            if self.nlu_bundle is None:
                raise RuntimeError("nlu role not configured")
            tokens = models.tokenize(msg["utterance"])
            intent, inform_tags, request_tags = models.predict_nlu(
                self.nlu_bundle, tokens)
            slots = models.bio_to_slots(tokens, inform_tags)
            requests = sorted({tag[2:].lower() for tag in request_tags
                               if tag.startswith("B-")})
            return {"intent": intent, "act": intent, "slots": slots,
                    "requests": requests}
        if op == "nlg":
            if self.nlg_model is None:
                raise RuntimeError("nlg role not configured")
            frame = msg["frame"]
            if isinstance(self.nlg_model, models.HfLm):
                utterance = self.nlg_model.generate_utterance(
                    frame, self.config.max_new_tokens, self.config.greedy,
                    self.config.seed)
            else:
                utterance = models.generate(
                    self.nlg_model, frame, self.config.max_new_tokens,
                    self.config.greedy, self.config.seed)
            return {"utterance": utterance or "."}
        raise RuntimeError(f"unknown op {op!r}")

    # -- transports -----------------------------------------------------------

    def serve_stdio(self, input_stream=None, output_stream=None):
        input_stream = input_stream or sys.stdin
        output_stream = output_stream or sys.stdout
        for line in input_stream:
            reply = self.handle_line(line)
            if reply is not None:
                output_stream.write(json.dumps(reply) + "\n")
                output_stream.flush()

    def serve_tcp(self, host, port, max_connections=None):
        server_socket = socket.create_server((host, port))
        served = 0
        try:
            while max_connections is None or served < max_connections:
                connection, _ = server_socket.accept()
                with connection:
                    reader = connection.makefile("r", encoding="utf-8")
                    writer = connection.makefile("w", encoding="utf-8")
                    for line in reader:
                        reply = self.handle_line(line)
                        if reply is not None:
                            writer.write(json.dumps(reply) + "\n")
                            writer.flush()
                served += 1
        finally:
            server_socket.close()
