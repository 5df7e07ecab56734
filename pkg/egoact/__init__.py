# Egocentric photo-stream activity recognition toolkit
