"""Mood-aware conversational engine.

Subpackages and modules:

* ``moodbot.nn`` — peephole-LSTM numerical core and training loop
* ``moodbot.text`` — cleansing, segmentation, embeddings, padding
* ``moodbot.classifier`` — binary Bi-LSTM text classifier (sentiment / relatedness)
* ``moodbot.corpus`` — '.conv' conversation files and corpus filtering
* ``moodbot.responder`` — seq2seq generation, beam search, MMI reranking
* ``moodbot.dialogue`` — session routing, trend switching, knowledge store
* ``moodbot.harness`` — response-quality ratio and sentiment trajectories
* ``moodbot.service`` — HTTP chat API
* ``moodbot.cli`` — umbrella command line
"""

__version__ = "0.1.0"
