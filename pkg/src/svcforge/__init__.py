"""svcforge: package AI models as containerized services, profile them per
node, and publish them into a semantically searchable service registry."""

__version__ = "0.1.0"
