"""Restaurant-domain dialog tasks: data pipeline, domain pack and a synthetic
corpus generator in the same transcript format."""
